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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mfvc/entropy.hpp"
#include "mfvc/error.hpp"

namespace mfvc {
namespace {

std::uint64_t total(const DiscretePmf& pmf) {
  return std::accumulate(pmf.freq.begin(), pmf.freq.end(), std::uint64_t{0}) + pmf.overflow_freq;
}

PmfProvider fixed(const DiscretePmf& pmf) {
  return [pmf](std::size_t, const LatentPlane&) { return pmf; };
}

DiscretePmf uniform_pmf() {
  // 256 symbols at 256 each fill all of 2^16; take one unit back for the
  // escape slot.
  DiscretePmf pmf;
  pmf.support_min = -127;
  pmf.support_max = 128;
  pmf.freq.assign(256, 256);
  pmf.freq[0] = 255;
  pmf.overflow_freq = 1;
  return pmf;
}

TEST(Discretize, ClosedFormMassesAtUnitScale) {
  const auto p = laplace_bin_probabilities(0.0, 0.0, -127, 128);
  EXPECT_NEAR(p[127], 1.0 - std::exp(-0.5), 1e-12);
  EXPECT_NEAR(p[128], 0.5 * std::exp(-0.5) - 0.5 * std::exp(-1.5), 1e-12);
  EXPECT_NEAR(p[127], 0.39347, 5e-6);
  EXPECT_NEAR(p[128], 0.19170, 5e-6);

  const DiscretePmf pmf = discretize_laplacian(0.0, 0.0);
  // Each of the 257 slots is floored at 1 before the rest is shared out.
  const double budget = 65536.0 - 257;
  EXPECT_NEAR(pmf.freq[127], 1 + 0.39347 * budget, 1.5);
  EXPECT_NEAR(pmf.freq[128], 1 + 0.19170 * budget, 1.5);
}

TEST(Discretize, SymmetricAroundZeroMean) {
  for (double ls : {-2.0, 0.0, 1.3, 4.0}) {
    const auto p = laplace_bin_probabilities(0.0, ls, -64, 64);
    for (int k = 1; k <= 64; ++k) EXPECT_DOUBLE_EQ(p[64 + k], p[64 - k]) << "k=" << k << " ls=" << ls;
  }
}

TEST(Discretize, MassesSumToOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu(-200, 200), ls(-6, 6);
  for (int t = 0; t < 200; ++t) {
    const auto p = laplace_bin_probabilities(mu(rng), ls(rng), -127, 128);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Discretize, FrequenciesSumTo65536WithFloor) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu(-300, 300), ls(-9, 9);
  for (int t = 0; t < 2000; ++t) {
    const DiscretePmf pmf = discretize_laplacian(mu(rng), ls(rng));
    ASSERT_EQ(total(pmf), kFreqTotal);
    ASSERT_GE(pmf.overflow_freq, 1u);
    for (auto f : pmf.freq) ASSERT_GE(f, 1u);
  }
}

TEST(Discretize, ClampsDegenerateInputs) {
  const DiscretePmf tight = discretize_laplacian(0.0, -50.0);
  const DiscretePmf at_min = discretize_laplacian(0.0, -6.0);
  EXPECT_EQ(tight.freq, at_min.freq);
  for (double bad : {NAN, INFINITY}) {
    const DiscretePmf pmf = discretize_laplacian(bad, bad);
    EXPECT_EQ(total(pmf), kFreqTotal);
  }
  EXPECT_THROW(discretize_laplacian(0.0, 0.0, 3, 3), ConfigError);
}

TEST(QuantizePmf, LargestRemainderIsExact) {
  // 3 symbols + escape with masses that do not divide evenly.
  const std::vector<double> probs{0.5, 0.3, 0.2, 0.0};
  const DiscretePmf pmf = quantize_pmf(probs, -1, 1);
  EXPECT_EQ(total(pmf), kFreqTotal);
  EXPECT_EQ(pmf.overflow_freq, 1u);
  const double budget = 65536.0 - 4;
  EXPECT_NEAR(pmf.freq[0], 1 + 0.5 * budget, 1.0);
  EXPECT_NEAR(pmf.freq[1], 1 + 0.3 * budget, 1.0);
  EXPECT_NEAR(pmf.freq[2], 1 + 0.2 * budget, 1.0);
}

TEST(QuantizePmf, RejectsBadSupport) {
  const std::vector<double> probs(5, 0.2);
  EXPECT_THROW(quantize_pmf(probs, 1, 4), ConfigError);
  EXPECT_THROW(quantize_pmf(probs, -1, 1), ConfigError);
}

TEST(EncodePlane, RoundtripRandomPlanesAndPmfs) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 4), h = 1 + static_cast<int>(rng() % 6),
              w = 1 + static_cast<int>(rng() % 6);
    LatentPlane plane(c, h, w);
    std::vector<double> mus(plane.size()), scales(plane.size());
    std::normal_distribution<double> noise(0, 1);
    const double spread = std::exp(noise(rng) * 2);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      mus[i] = noise(rng) * 3;
      scales[i] = std::log(spread) + noise(rng) * 0.5;
      double v = mus[i] + noise(rng) * spread * 2;
      if (rng() % 50 == 0) v *= 100;  // exercise the escape path now and then
      plane.values[i] = static_cast<std::int32_t>(std::lround(v));
    }
    const ScanOrder order = trial % 2 ? ScanOrder::kPositionMajor : ScanOrder::kChannelMajor;
    // Symbol i's PMF depends on scan index i so encoder and decoder agree.
    const PmfProvider pmfs = [&](std::size_t i, const LatentPlane&) {
      return discretize_laplacian(mus[i], scales[i]);
    };
    const CodedStream s = encode_plane(plane, pmfs, order);
    EXPECT_EQ(s.symbol_count, plane.size());
    const LatentPlane back = decode_plane(s.bytes, pmfs, LatentPlane(c, h, w), order);
    ASSERT_EQ(back, plane) << "trial " << trial;
  }
}

TEST(EncodePlane, AdaptiveProviderSeesDecodedPrefix) {
  // PMF centered on the previously coded symbol, like a causal context model.
  LatentPlane plane(2, 5, 7);
  std::mt19937_64 rng(9);
  for (auto& v : plane.values) v = static_cast<std::int32_t>(rng() % 21) - 10;
  for (ScanOrder order : {ScanOrder::kChannelMajor, ScanOrder::kPositionMajor}) {
    const PmfProvider pmfs = [order](std::size_t i, const LatentPlane& seen) {
      if (i == 0) return discretize_laplacian(0, 1);
      const PlaneIndex p = scan_position(seen, i - 1, order);
      return discretize_laplacian(seen.at(p.c, p.y, p.x), 1.5);
    };
    const CodedStream s = encode_plane(plane, pmfs, order);
    EXPECT_EQ(decode_plane(s.bytes, pmfs, LatentPlane(2, 5, 7), order), plane);
  }
}

TEST(EncodePlane, EmptyPlane) {
  const LatentPlane empty(0, 0, 0);
  const CodedStream s = encode_plane(empty, fixed(discretize_laplacian(0, 0)));
  EXPECT_TRUE(s.bytes.empty());
  EXPECT_EQ(s.symbol_count, 0u);
  EXPECT_EQ(decode_plane(s.bytes, fixed(discretize_laplacian(0, 0)), empty), empty);
}

TEST(EncodePlane, EscapeCarriesLargeValues) {
  LatentPlane plane(1, 1, 6);
  plane.values = {10000, -10000, 65, -65, 0, 2147483647};
  const auto pmfs = fixed(discretize_laplacian(0, 0, -64, 64));
  const CodedStream s = encode_plane(plane, pmfs);
  EXPECT_GT(s.bypass_bit_count, 0u);
  EXPECT_EQ(decode_plane(s.bytes, pmfs, LatentPlane(1, 1, 6)), plane);
  LatentPlane extreme(1, 1, 1, -2147483647 - 1);
  EXPECT_EQ(decode_plane(encode_plane(extreme, pmfs).bytes, pmfs, LatentPlane(1, 1, 1)), extreme);
}

TEST(EncodePlane, EscapeBitCount) {
  const DiscretePmf pmf = discretize_laplacian(0, 0, -64, 64);
  EXPECT_EQ(escape_bits(pmf, 0), 0);
  EXPECT_EQ(escape_bits(pmf, 65), 2);   // magnitude 0: sign + single '1'
  EXPECT_EQ(escape_bits(pmf, -66), 4);  // magnitude 1: sign + '010'
  // 10000 - 65 = 9935; 9936 has 14 significant bits.
  EXPECT_EQ(escape_bits(pmf, 10000), 28);
}

TEST(EncodePlane, AllZeroAtMinimumScaleIsTiny) {
  LatentPlane plane(4, 32, 32);
  const auto pmfs = fixed(discretize_laplacian(0, -6));
  const CodedStream s = encode_plane(plane, pmfs);
  EXPECT_LE(s.bytes.size(), plane.size() / 8 + 8);
}

TEST(EncodePlane, UniformCostsEightBitsPerSymbol) {
  const DiscretePmf pmf = uniform_pmf();
  LatentPlane plane(1, 64, 64);
  std::mt19937_64 rng(5);
  for (auto& v : plane.values) v = static_cast<std::int32_t>(rng() % 255) - 126;  // skip the 255-freq slot
  const CodedStream s = encode_plane(plane, fixed(pmf));
  const double bits = 8.0 * s.bytes.size();
  EXPECT_LE(std::fabs(bits - 8.0 * plane.size()), 0.01 * 8.0 * plane.size() + 64);
  EXPECT_DOUBLE_EQ(plane_cross_entropy(plane, fixed(pmf)), 8.0 * plane.size());
}

TEST(EncodePlane, SingleHalfProbabilitySymbol) {
  DiscretePmf pmf;
  pmf.support_min = 0;
  pmf.support_max = 1;
  pmf.freq = {32768, 32767};
  pmf.overflow_freq = 1;
  LatentPlane plane(1, 1, 1);
  const CodedStream s = encode_plane(plane, fixed(pmf));
  // One bit of payload plus the four-byte flush.
  EXPECT_LE(s.bytes.size() * 8, 1u + 32u);
  EXPECT_EQ(decode_plane(s.bytes, fixed(pmf), LatentPlane(1, 1, 1)), plane);
}

TEST(CrossEntropy, FloorSymbolCostsSixteenBits) {
  DiscretePmf pmf;
  pmf.support_min = 0;
  pmf.support_max = 1;
  pmf.freq = {65534, 1};
  pmf.overflow_freq = 1;
  EXPECT_DOUBLE_EQ(symbol_bits(pmf, 1), 16.0);
  LatentPlane plane(1, 1, 1);
  plane.values = {1};
  EXPECT_DOUBLE_EQ(plane_cross_entropy(plane, fixed(pmf)), 16.0);
}

TEST(CrossEntropy, EscapeAddsBypassBits) {
  const DiscretePmf pmf = discretize_laplacian(0, 0, -64, 64);
  const double esc = kFreqBits - std::log2(static_cast<double>(pmf.overflow_freq));
  EXPECT_DOUBLE_EQ(symbol_bits(pmf, 10000), esc + 28);
}

TEST(CrossEntropy, CodedLengthTracksCrossEntropy) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    LatentPlane plane(4, 32, 32);  // 4096 symbols
    std::vector<double> mus(plane.size()), scales(plane.size());
    const double base = -2.0 + trial * 0.35;
    for (std::size_t i = 0; i < plane.size(); ++i) {
      mus[i] = noise(rng) * 2;
      scales[i] = base + noise(rng) * 0.3;
      plane.values[i] = static_cast<std::int32_t>(std::lround(mus[i] + noise(rng) * std::exp(scales[i])));
    }
    const PmfProvider pmfs = [&](std::size_t i, const LatentPlane&) {
      return discretize_laplacian(mus[i], scales[i]);
    };
    const double ce = plane_cross_entropy(plane, pmfs);
    const double coded = 8.0 * encode_plane(plane, pmfs).bytes.size();
    EXPECT_LE(std::fabs(coded - ce), 0.02 * ce + 64) << "trial " << trial;
  }
}

TEST(CrossEntropy, WiderScaleNeverShrinksAllZeroPlane) {
  LatentPlane plane(2, 32, 32);
  std::size_t prev = 0;
  for (double ls = -6; ls <= 6; ls += 0.25) {
    const std::size_t len = encode_plane(plane, fixed(discretize_laplacian(0, ls))).bytes.size();
    EXPECT_GE(len, prev) << "log_scale " << ls;
    prev = len;
  }
}

TEST(DecodePlane, TruncatedStreamIsCorrupt) {
  LatentPlane plane(1, 16, 16);
  std::mt19937_64 rng(2);
  for (auto& v : plane.values) v = static_cast<std::int32_t>(rng() % 200) - 100;
  const auto pmfs = fixed(discretize_laplacian(0, 4));
  CodedStream s = encode_plane(plane, pmfs);
  s.bytes.resize(s.bytes.size() / 2);
  EXPECT_THROW(decode_plane(s.bytes, pmfs, LatentPlane(1, 16, 16)), CorruptStreamError);
  EXPECT_THROW(decode_plane({}, pmfs, LatentPlane(1, 16, 16)), CorruptStreamError);
}

TEST(DecodePlane, MalformedEscapeIsCorrupt) {
  // A stream that lands on the escape slot and then reads nothing but zero
  // bits for the Exp-Golomb prefix.
  DiscretePmf pmf;
  pmf.support_min = 0;
  pmf.support_max = 1;
  pmf.freq = {1, 1};
  pmf.overflow_freq = 65534;
  RangeEncoder enc;
  enc.encode(2, 65534);
  enc.encode_bits(0, 1);
  for (int i = 0; i < 40; ++i) enc.encode_bits(0, 1);
  const auto bytes = enc.finish();
  EXPECT_THROW(decode_plane(bytes, fixed(pmf), LatentPlane(1, 1, 1)), CorruptStreamError);
}

TEST(DecodePlane, GarbageNeverCrashes) {
  std::mt19937_64 rng(99);
  const auto pmfs = fixed(discretize_laplacian(0, 2));
  int decoded = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint8_t> junk(1 + rng() % 64);
    for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
    try {
      decode_plane(junk, pmfs, LatentPlane(1, 8, 8));
      ++decoded;
    } catch (const CorruptStreamError&) {
    }
  }
  SUCCEED() << decoded << " garbage streams happened to decode";
}

TEST(RangeCoder, CarryPropagationRoundtrip) {
  // Skewed frequencies near the top of the range force long 0xFF runs.
  std::mt19937_64 rng(4);
  RangeEncoder enc;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> syms;
  for (int i = 0; i < 20000; ++i) {
    const bool top = rng() % 16 != 0;
    syms.emplace_back(top ? 65535u : rng() % 65535, 1u);
    enc.encode(syms.back().first, 1);
  }
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto [cum, freq] : syms) {
    ASSERT_EQ(dec.peek(), cum);
    dec.consume(cum, freq);
  }
}

TEST(ScanOrder, PositionMajorVisitsChannelsInnermost) {
  const LatentPlane plane(3, 2, 2);
  const PlaneIndex a = scan_position(plane, 4, ScanOrder::kPositionMajor);
  EXPECT_EQ(a.c, 1);
  EXPECT_EQ(a.y, 0);
  EXPECT_EQ(a.x, 1);
  const PlaneIndex b = scan_position(plane, 5, ScanOrder::kChannelMajor);
  EXPECT_EQ(b.c, 1);
  EXPECT_EQ(b.y, 0);
  EXPECT_EQ(b.x, 1);
}

}  // namespace
}  // namespace mfvc
