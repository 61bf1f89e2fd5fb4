/* Copyright 2026 The MFVC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mfvc/entropy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "mfvc/laplace.hpp"

namespace mfvc {
namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr int kMaxEscapePrefix = 32;

// Escaped magnitude: distance past the nearest support edge, minus one.
std::uint64_t escape_magnitude(const DiscretePmf& pmf, std::int32_t v) {
  return v > pmf.support_max
             ? static_cast<std::uint64_t>(static_cast<std::int64_t>(v) - pmf.support_max - 1)
             : static_cast<std::uint64_t>(static_cast<std::int64_t>(pmf.support_min) - v - 1);
}

int bit_length(std::uint64_t x) { return 64 - std::countl_zero(x); }

}  // namespace

std::vector<std::uint32_t> cumulative(const DiscretePmf& pmf) {
  std::vector<std::uint32_t> cdf(pmf.freq.size() + 2);
  for (std::size_t i = 0; i < pmf.freq.size(); ++i) cdf[i + 1] = cdf[i] + pmf.freq[i];
  cdf.back() = cdf[pmf.freq.size()] + pmf.overflow_freq;
  return cdf;
}

DiscretePmf quantize_pmf(std::span<const double> probs, int support_min, int support_max) {
  const std::size_t n = static_cast<std::size_t>(support_max - support_min + 1);
  if (support_min > 0 || support_max < 0 || support_min >= support_max) {
    throw ConfigError("pmf support must satisfy support_min <= 0 <= support_max");
  }
  if (probs.size() != n + 1) throw ConfigError("quantize_pmf: expected support size + 1 masses");
  if (n + 1 > kFreqTotal / 2) throw ConfigError("quantize_pmf: support too large for 16-bit frequencies");

  const double budget = static_cast<double>(kFreqTotal - (n + 1));
  double total_mass = 0;
  for (double p : probs) total_mass += std::max(p, 0.0);
  const double norm = total_mass > 0 ? 1.0 / total_mass : 0.0;

  std::vector<std::uint32_t> freq(n + 1);
  std::vector<double> remainder(n + 1);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double share = std::max(probs[i], 0.0) * norm * budget;
    const double whole = std::floor(share);
    freq[i] = 1 + static_cast<std::uint32_t>(whole);
    remainder[i] = share - whole;
    assigned += freq[i];
  }
  // Rounding noise can overshoot by a unit; take it back from the largest slot.
  while (assigned > kFreqTotal) {
    auto it = std::max_element(freq.begin(), freq.end());
    --*it;
    --assigned;
  }
  std::size_t left = kFreqTotal - assigned;
  if (left > 0) {
    std::vector<std::size_t> order(n + 1);
    std::iota(order.begin(), order.end(), 0);
    const auto by_remainder = [&](std::size_t a, std::size_t b) {
      return remainder[a] != remainder[b] ? remainder[a] > remainder[b] : a < b;
    };
    left = std::min(left, order.size());
    std::nth_element(order.begin(), order.begin() + (left - 1), order.end(), by_remainder);
    for (std::size_t i = 0; i < left; ++i) ++freq[order[i]];
    assigned += left;
  }
  // Only reachable if the masses were all zero: park the rest on symbol 0.
  freq[static_cast<std::size_t>(-support_min)] += static_cast<std::uint32_t>(kFreqTotal - assigned);

  DiscretePmf pmf;
  pmf.support_min = support_min;
  pmf.support_max = support_max;
  pmf.overflow_freq = freq.back();
  freq.pop_back();
  pmf.freq = std::move(freq);
  return pmf;
}

std::vector<double> laplace_bin_probabilities(double mu, double log_scale, int support_min,
                                              int support_max) {
  if (support_min >= support_max) throw ConfigError("laplace support must be non-empty");
  if (!std::isfinite(mu)) mu = 0;
  if (!std::isfinite(log_scale)) log_scale = kLogScaleMax;
  log_scale = std::clamp(log_scale, kLogScaleMin, kLogScaleMax);
  mu = std::clamp(mu, static_cast<double>(support_min) - 1e6, static_cast<double>(support_max) + 1e6);
  const double b = std::exp(log_scale);
  const std::size_t n = static_cast<std::size_t>(support_max - support_min + 1);
  std::vector<double> probs(n + 1);
  double prev = laplace_cdf(support_min - 0.5, mu, b);
  const double low_tail = prev;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(support_min) + static_cast<double>(i);
    const double next = laplace_cdf(k + 0.5, mu, b);
    // Right of mu both ends sit on the upper branch; difference the survival
    // functions there to keep precision in the tail.
    double p;
    if (k - 0.5 >= mu) {
      p = 0.5 * (std::exp(-(k - 0.5 - mu) / b) - std::exp(-(k + 0.5 - mu) / b));
    } else {
      p = next - prev;
    }
    probs[i] = std::max(p, 0.0);
    prev = next;
  }
  const double edge = support_max + 0.5;
  const double high_tail = edge >= mu ? 0.5 * std::exp(-(edge - mu) / b)
                                      : 1.0 - 0.5 * std::exp(-(mu - edge) / b);
  probs[n] = low_tail + high_tail;
  return probs;
}

DiscretePmf discretize_laplacian(double mu, double log_scale, int support_min, int support_max) {
  const auto probs = laplace_bin_probabilities(mu, log_scale, support_min, support_max);
  return quantize_pmf(probs, support_min, support_max);
}

int escape_bits(const DiscretePmf& pmf, std::int32_t v) {
  if (pmf.in_support(v)) return 0;
  return 2 * bit_length(escape_magnitude(pmf, v) + 1);
}

double symbol_bits(const DiscretePmf& pmf, std::int32_t v) {
  if (pmf.in_support(v)) {
    return kFreqBits - std::log2(static_cast<double>(pmf.freq[v - pmf.support_min]));
  }
  return kFreqBits - std::log2(static_cast<double>(pmf.overflow_freq)) + escape_bits(pmf, v);
}

// ---------------------------------------------------------------------------
// Range coder

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const std::uint8_t carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  const std::uint32_t r = range_ >> kFreqBits;
  low_ += static_cast<std::uint64_t>(r) * cum;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_bits(std::uint32_t value, int count) {
  for (int i = count - 1; i >= 0; --i) {
    range_ >>= 1;
    if ((value >> i) & 1u) low_ += range_;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  // The first byte is the integer part of the code value and always zero.
  out_.erase(out_.begin());
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size()) throw CorruptStreamError("range decoder: stream exhausted early");
  return bytes_[pos_++];
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next_byte();
  }
}

std::uint32_t RangeDecoder::peek() {
  const std::uint32_t r = range_ >> kFreqBits;
  const std::uint32_t target = code_ / r;
  if (target >= kFreqTotal) throw CorruptStreamError("range decoder: code outside coding interval");
  return target;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  const std::uint32_t r = range_ >> kFreqBits;
  code_ -= r * cum;
  range_ = r * freq;
  normalize();
}

std::uint32_t RangeDecoder::decode_bits(int count) {
  std::uint32_t value = 0;
  for (int i = 0; i < count; ++i) {
    range_ >>= 1;
    std::uint32_t bit = 0;
    if (code_ >= range_) {
      code_ -= range_;
      bit = 1;
    }
    value = (value << 1) | bit;
    normalize();
  }
  return value;
}

// ---------------------------------------------------------------------------
// Symbols

void SymbolEncoder::put(std::int32_t value, const DiscretePmf& pmf) {
  ++symbols_;
  const auto cdf = cumulative(pmf);
  if (pmf.in_support(value)) {
    const std::size_t s = static_cast<std::size_t>(value - pmf.support_min);
    coder_.encode(cdf[s], pmf.freq[s]);
    return;
  }
  const std::size_t esc = pmf.freq.size();
  coder_.encode(cdf[esc], pmf.overflow_freq);
  // Sign, then order-0 Exp-Golomb of the magnitude.
  coder_.encode_bits(value < pmf.support_min ? 1u : 0u, 1);
  const std::uint64_t m1 = escape_magnitude(pmf, value) + 1;
  const int len = bit_length(m1);
  coder_.encode_bits(0, len - 1);
  coder_.encode_bits(1, 1);
  if (len > 1) coder_.encode_bits(static_cast<std::uint32_t>(m1 & ((1ull << (len - 1)) - 1)), len - 1);
  bypass_bits_ += static_cast<std::size_t>(2 * len);
}

CodedStream SymbolEncoder::finish() {
  CodedStream s;
  s.symbol_count = symbols_;
  s.bypass_bit_count = bypass_bits_;
  if (symbols_ > 0) s.bytes = coder_.finish();
  return s;
}

SymbolDecoder::SymbolDecoder(std::span<const std::uint8_t> bytes) {
  // An empty stream is only valid for an empty plane; complain on first use.
  if (!bytes.empty()) coder_.emplace(bytes);
}

std::int32_t SymbolDecoder::get(const DiscretePmf& pmf) {
  if (!coder_) throw CorruptStreamError("symbol decoder: stream exhausted early");
  RangeDecoder& coder = *coder_;
  const auto cdf = cumulative(pmf);
  const std::uint32_t target = coder.peek();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  const std::size_t slot = static_cast<std::size_t>(it - cdf.begin()) - 1;
  coder.consume(cdf[slot], cdf[slot + 1] - cdf[slot]);
  if (slot < pmf.freq.size()) return pmf.support_min + static_cast<std::int32_t>(slot);

  const bool below = coder.decode_bits(1) != 0;
  int zeros = 0;
  while (coder.decode_bits(1) == 0) {
    if (++zeros >= kMaxEscapePrefix) throw CorruptStreamError("symbol decoder: malformed escape magnitude");
  }
  std::uint64_t m1 = 1;
  if (zeros > 0) m1 = (1ull << zeros) | coder.decode_bits(zeros);
  const std::int64_t m = static_cast<std::int64_t>(m1 - 1);
  const std::int64_t v = below ? static_cast<std::int64_t>(pmf.support_min) - 1 - m
                               : static_cast<std::int64_t>(pmf.support_max) + 1 + m;
  if (v < INT32_MIN || v > INT32_MAX) throw CorruptStreamError("symbol decoder: escaped value out of range");
  return static_cast<std::int32_t>(v);
}

// ---------------------------------------------------------------------------
// Planes

PlaneIndex scan_position(const LatentPlane& plane, std::size_t i, ScanOrder order) {
  const std::size_t hw = static_cast<std::size_t>(plane.height) * plane.width;
  if (order == ScanOrder::kChannelMajor) {
    const int c = static_cast<int>(i / hw);
    const std::size_t r = i % hw;
    return {c, static_cast<int>(r / plane.width), static_cast<int>(r % plane.width)};
  }
  const std::size_t pos = i / plane.channels;
  return {static_cast<int>(i % plane.channels), static_cast<int>(pos / plane.width),
          static_cast<int>(pos % plane.width)};
}

CodedStream encode_plane(const LatentPlane& plane, const PmfProvider& pmfs, ScanOrder order) {
  SymbolEncoder enc;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const PlaneIndex p = scan_position(plane, i, order);
    enc.put(plane.at(p.c, p.y, p.x), pmfs(i, plane));
  }
  return enc.finish();
}

LatentPlane decode_plane(std::span<const std::uint8_t> bytes, const PmfProvider& pmfs,
                         const LatentPlane& shape, ScanOrder order) {
  LatentPlane out(shape.channels, shape.height, shape.width);
  if (out.size() == 0) return out;
  SymbolDecoder dec(bytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const PlaneIndex p = scan_position(out, i, order);
    out.at(p.c, p.y, p.x) = dec.get(pmfs(i, out));
  }
  return out;
}

double plane_cross_entropy(const LatentPlane& plane, const PmfProvider& pmfs, ScanOrder order) {
  double bits = 0;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const PlaneIndex p = scan_position(plane, i, order);
    bits += symbol_bits(pmfs(i, plane), plane.at(p.c, p.y, p.x));
  }
  return bits;
}

}  // namespace mfvc
