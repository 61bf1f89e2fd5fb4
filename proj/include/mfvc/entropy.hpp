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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mfvc/tensor.hpp"

namespace mfvc {

inline constexpr int kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;
inline constexpr int kDefaultSupportMin = -127;
inline constexpr int kDefaultSupportMax = 128;

// Integer frequency table over [support_min, support_max] plus one escape
// slot for everything outside it. Frequencies sum to 2^16 exactly.
struct DiscretePmf {
  int support_min = kDefaultSupportMin;
  int support_max = kDefaultSupportMax;
  std::vector<std::uint32_t> freq;  // one per in-support symbol
  std::uint32_t overflow_freq = 1;

  int support_size() const { return support_max - support_min + 1; }
  bool in_support(std::int32_t v) const { return v >= support_min && v <= support_max; }
};

// Cumulative view used by the coder: cdf[i] is the start of slot i, slot
// support_size() is the escape, cdf.back() == 2^16.
std::vector<std::uint32_t> cumulative(const DiscretePmf& pmf);

// Quantize a probability vector (in-support masses followed by the tail
// mass) to frequencies: every slot gets at least 1, the rest is distributed
// proportionally with largest-remainder rounding.
DiscretePmf quantize_pmf(std::span<const double> probs, int support_min, int support_max);

// Unquantized bin masses F(k+1/2) - F(k-1/2) for k in the support, followed by
// the combined mass of both tails.
std::vector<double> laplace_bin_probabilities(double mu, double log_scale, int support_min,
                                              int support_max);

// Laplacian with location mu and scale e^log_scale (log_scale clamped to
// [-6, 6]), discretized to unit bins centered on the integers.
DiscretePmf discretize_laplacian(double mu, double log_scale, int support_min = kDefaultSupportMin,
                                 int support_max = kDefaultSupportMax);

// Bits needed to code v under pmf, including escape bypass bits.
double symbol_bits(const DiscretePmf& pmf, std::int32_t v);
// Number of bypass bits an escaped value costs (sign + Exp-Golomb).
int escape_bits(const DiscretePmf& pmf, std::int32_t v);

struct CodedStream {
  std::vector<std::uint8_t> bytes;
  std::size_t symbol_count = 0;
  std::size_t bypass_bit_count = 0;
};

// 32-bit range coder with 16-bit frequencies, byte-wise renormalization and
// carry propagation through a cached byte. Output bytes are big-endian in
// coding order.
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq);
  void encode_bits(std::uint32_t value, int count);
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);
  // Frequency-domain target in [0, 2^16) of the next symbol.
  std::uint32_t peek();
  void consume(std::uint32_t cum, std::uint32_t freq);
  std::uint32_t decode_bits(int count);

 private:
  std::uint8_t next_byte();
  void normalize();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

// Symbol-level coding with escape handling.
class SymbolEncoder {
 public:
  void put(std::int32_t value, const DiscretePmf& pmf);
  CodedStream finish();

 private:
  RangeEncoder coder_;
  std::size_t symbols_ = 0;
  std::size_t bypass_bits_ = 0;
};

class SymbolDecoder {
 public:
  explicit SymbolDecoder(std::span<const std::uint8_t> bytes);
  std::int32_t get(const DiscretePmf& pmf);

 private:
  std::optional<RangeDecoder> coder_;
};

// Order in which a plane is serialized into symbols.
enum class ScanOrder {
  kChannelMajor,   // channel, then row, then column
  kPositionMajor,  // row, then column, then channel
};

struct PlaneIndex {
  int c;
  int y;
  int x;
};
PlaneIndex scan_position(const LatentPlane& plane, std::size_t i, ScanOrder order);

// Returns the PMF for the i-th symbol in scan order. `decoded` holds every
// symbol before i; later entries are unspecified and must not be read.
using PmfProvider = std::function<DiscretePmf(std::size_t i, const LatentPlane& decoded)>;

CodedStream encode_plane(const LatentPlane& plane, const PmfProvider& pmfs,
                         ScanOrder order = ScanOrder::kChannelMajor);
// `shape` supplies the extents (values are ignored); count is shape.size().
LatentPlane decode_plane(std::span<const std::uint8_t> bytes, const PmfProvider& pmfs,
                         const LatentPlane& shape, ScanOrder order = ScanOrder::kChannelMajor);
double plane_cross_entropy(const LatentPlane& plane, const PmfProvider& pmfs,
                           ScanOrder order = ScanOrder::kChannelMajor);

}  // namespace mfvc
