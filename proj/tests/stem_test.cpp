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

#include <random>

#include "mfvc/error.hpp"
#include "mfvc/stem.hpp"

namespace mfvc {
namespace {

StemConfig micro_stem() {
  StemConfig cfg;
  cfg.latent_channels = 4;
  cfg.hyper_channels = 5;
  cfg.tpm_channels = {6, 7, 8};
  cfg.spm_channels = 8;
  cfg.epm_channels = {12, 10};
  return cfg;
}

StemWeights<float> frozen_stem(const StemConfig& cfg, std::uint64_t seed) {
  auto w = init_stem<float>(cfg, seed);
  w.set_trainable(false);
  return w;
}

LatentPlane random_plane(int c, int h, int w, int spread, std::mt19937_64& rng) {
  LatentPlane p(c, h, w);
  for (auto& v : p.values) v = static_cast<int>(rng() % (2 * spread + 1)) - spread;
  return p;
}

const StemFlags kAllFlags[] = {
    {true, true, true},   {false, true, true},   {false, false, true},  {true, false, true},
    {true, true, false},  {false, true, false},  {false, false, false}, {true, false, false},
};

TEST(Residual, IdenticalLatentsGiveZeros) {
  std::mt19937_64 rng(1);
  const LatentPlane a = random_plane(3, 4, 5, 9, rng);
  for (int v : residual_latent(a, a).values) EXPECT_EQ(v, 0);
}

TEST(Residual, IntegerInverse) {
  std::mt19937_64 rng(2);
  const LatentPlane a = random_plane(3, 4, 5, 9, rng), b = random_plane(3, 4, 5, 9, rng);
  EXPECT_EQ(reconstruct_latent(residual_latent(a, b), b), a);
  EXPECT_EQ(reconstruct_latent(LatentPlane(3, 4, 5), b), b);
  const LatentPlane five(2, 2, 2, 5), three(2, 2, 2, 3);
  EXPECT_EQ(residual_latent(five, three), LatentPlane(2, 2, 2, 2));
  EXPECT_THROW(residual_latent(five, LatentPlane(2, 2, 3)), ShapeError);
}

TEST(StemConfig, ScaledWidthsFollowReferenceRatios) {
  const StemConfig c = StemConfig::scaled(32);
  EXPECT_EQ(c.hyper_channels, 26);
  EXPECT_EQ(c.tpm_channels, (std::vector<int>{43, 53, 64}));
  EXPECT_EQ(c.spm_channels, 64);
  EXPECT_EQ(c.epm_channels, (std::vector<int>{160, 128}));
  EXPECT_EQ(c.phd_channels(), 64);
  const StemConfig full_scale = StemConfig::scaled(320);
  EXPECT_EQ(full_scale.hyper_channels, 256);
  EXPECT_EQ(full_scale.tpm_channels, (std::vector<int>{426, 533, 640}));
  EXPECT_EQ(full_scale.epm_channels, (std::vector<int>{1600, 1280}));
}

TEST(HyperEncode, QuartersTheLatentExtent) {
  const auto w = frozen_stem(micro_stem(), 3);
  std::mt19937_64 rng(3);
  const LatentPlane a = random_plane(4, 16, 12, 5, rng), b = random_plane(4, 16, 12, 5, rng);
  const HyperResult r = hyper_encode(a, b, w);
  EXPECT_EQ(r.z_hat.channels, 5);
  EXPECT_EQ(r.z_hat.height, 4);
  EXPECT_EQ(r.z_hat.width, 3);
  const auto pmfs = z_prior_pmfs(w.z_mu.value(), w.z_log_scale.value());
  EXPECT_EQ(decode_hyper(encode_hyper(r.z_hat, pmfs).bytes, pmfs, 5, 4, 3), r.z_hat);
}

TEST(HyperEncode, ZeroWeightsGiveRoundedBias) {
  auto w = init_stem<float>(micro_stem(), 3);
  for (auto& l : w.phe) l.kernel.mutable_value().fill(0);
  w.phe.back().bias.mutable_value().fill(1.6f);
  w.set_trainable(false);
  std::mt19937_64 rng(3);
  const HyperResult r = hyper_encode(random_plane(4, 8, 8, 5, rng), random_plane(4, 8, 8, 5, rng), w);
  for (int v : r.z_hat.values) EXPECT_EQ(v, 2);
}

TEST(TemporalPrior, KeepsExtentAndIsZeroOnZeroInput) {
  auto w = init_stem<float>(micro_stem(), 5);
  for (auto& l : w.tpm) l.bias.mutable_value().fill(0);
  w.set_trainable(false);
  const Tensor<float> t = temporal_prior(LatentPlane(4, 7, 9), w);
  EXPECT_EQ(t.shape(), (Shape{1, 8, 7, 9}));
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0f);
  std::mt19937_64 rng(1);
  const LatentPlane p = random_plane(4, 7, 9, 3, rng);
  EXPECT_EQ(temporal_prior(p, w), temporal_prior(p, w));
}

TEST(SpatialPrior, FirstPositionIsBiasAndCausal) {
  const auto w = frozen_stem(micro_stem(), 6);
  EXPECT_EQ(w.spm.kernel_size(), 5);
  std::mt19937_64 rng(6);
  const LatentPlane p = random_plane(4, 8, 8, 4, rng);
  const Tensor<float> base = spatial_prior(p, w);
  for (int s = 0; s < 8; ++s) EXPECT_FLOAT_EQ(base(0, s, 0, 0), w.spm.bias.value()[static_cast<std::size_t>(s)]);
  for (int j = 0; j < 64; ++j) {
    LatentPlane q = p;
    q.at(static_cast<int>(rng() % 4), j / 8, j % 8) += 7;
    const Tensor<float> out = spatial_prior(q, w);
    for (int i = 0; i <= j; ++i)
      for (int s = 0; s < 8; ++s) ASSERT_EQ(out(0, s, i / 8, i % 8), base(0, s, i / 8, i % 8));
  }
}

TEST(EntropyParams, ZeroInputAndBiasGiveUnitScale) {
  auto w = init_stem<float>(micro_stem(), 7);
  for (auto& l : w.epm) l.bias.mutable_value().fill(0);
  w.set_trainable(false);
  const EntropyParams p = entropy_params(Tensor<float>(Shape{1, 8, 3, 3}), Tensor<float>(Shape{1, 8, 3, 3}),
                                         Tensor<float>(Shape{1, 8, 3, 3}), StemFlags{}, w);
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    EXPECT_EQ(p.mu[i], 0.0f);
    EXPECT_EQ(p.log_scale[i], 0.0f);
  }
  EXPECT_THROW(entropy_params(Tensor<float>(Shape{1, 8, 3, 3}), Tensor<float>(Shape{1, 8, 3, 4}),
                              Tensor<float>(Shape{1, 8, 3, 3}), StemFlags{}, w),
               ShapeError);
}

TEST(EntropyParams, DisabledBranchesKeepShapes) {
  const auto w = frozen_stem(micro_stem(), 7);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0, 1);
  Tensor<float> a(Shape{1, 8, 3, 3}), b(Shape{1, 8, 3, 3}), c(Shape{1, 8, 3, 3});
  for (auto* t : {&a, &b, &c})
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = n(rng);
  const EntropyParams full = entropy_params(a, b, c, StemFlags{}, w);
  const EntropyParams no_spm = entropy_params(a, b, c, StemFlags{false, true, true}, w);
  const EntropyParams zero_spm = entropy_params(a, Tensor<float>(b.shape()), c, StemFlags{}, w);
  EXPECT_EQ(full.mu.shape(), no_spm.mu.shape());
  EXPECT_FALSE(full.mu == no_spm.mu);
  EXPECT_EQ(no_spm.mu, zero_spm.mu);
}

TEST(PFrame, RoundtripRandomLatentsWeightsAndFlags) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto w = frozen_stem(micro_stem(), static_cast<std::uint64_t>(trial));
    const int h = 1 + static_cast<int>(rng() % 9), wd = 1 + static_cast<int>(rng() % 9);
    const LatentPlane prev = random_plane(4, h, wd, 6, rng);
    LatentPlane cur = prev;
    for (auto& v : cur.values) v += static_cast<int>(rng() % 5) - 2;
    if (trial % 7 == 0) cur.values[0] = 40000;  // forces the escape path
    const StemFlags flags = kAllFlags[trial % 8];
    const FrameChunk chunk = encode_pframe(cur, prev, flags, w);
    ASSERT_EQ(decode_pframe(chunk, prev, flags, w), cur) << "trial " << trial << " " << flags.name();
    EXPECT_EQ(encode_pframe(cur, prev, flags, w), chunk);
  }
}

TEST(PFrame, ScaledModelRoundtrip) {
  const auto w = frozen_stem(StemConfig::scaled(32), 2);
  std::mt19937_64 rng(12);
  const LatentPlane prev = random_plane(32, 8, 8, 3, rng);
  const LatentPlane cur = random_plane(32, 8, 8, 3, rng);
  const FrameChunk chunk = encode_pframe(cur, prev, StemFlags{}, w);
  EXPECT_EQ(decode_pframe(chunk, prev, StemFlags{}, w), cur);
}

TEST(PFrame, RateEstimateTracksStream) {
  const auto w = frozen_stem(StemConfig::scaled(32), 4);
  std::mt19937_64 rng(13);
  for (const StemFlags& flags : kAllFlags) {
    const LatentPlane prev = random_plane(32, 12, 12, 4, rng);
    LatentPlane cur = prev;
    for (auto& v : cur.values) v += static_cast<int>(rng() % 3) - 1;
    const PFrameRate est = p_frame_rate(cur, prev, flags, w);
    const FrameChunk chunk = encode_pframe(cur, prev, flags, w);
    const double coded = 8.0 * (chunk.z_stream.size() + chunk.y_stream.size());
    const double total = est.y_bits + est.z_bits;
    EXPECT_LE(std::fabs(coded - total), 0.02 * total + 128) << flags.name();
    EXPECT_EQ(est.symbol_bits.shape(), (Shape{1, 32, 12, 12}));
  }
}

TEST(PFrame, WrongReferenceOrTruncationDoesNotRoundtrip) {
  const auto w = frozen_stem(micro_stem(), 8);
  std::mt19937_64 rng(14);
  const LatentPlane prev = random_plane(4, 8, 8, 6, rng), cur = random_plane(4, 8, 8, 6, rng);
  FrameChunk chunk = encode_pframe(cur, prev, StemFlags{}, w);
  LatentPlane other = prev;
  other.values[0] += 1;
  EXPECT_NE(decode_pframe(chunk, other, StemFlags{}, w), cur);
  chunk.y_stream.resize(chunk.y_stream.size() / 3);
  EXPECT_THROW(decode_pframe(chunk, prev, StemFlags{}, w), CorruptStreamError);
}

TEST(PFrame, ScanOrderMatters) {
  // Decoding a position-major stream channel-major uses the wrong PMFs.
  const auto w = frozen_stem(micro_stem(), 9);
  std::mt19937_64 rng(15);
  const LatentPlane prev = random_plane(4, 6, 6, 6, rng), cur = random_plane(4, 6, 6, 6, rng);
  const FrameChunk chunk = encode_pframe(cur, prev, StemFlags{}, w);
  const LatentPlane res = residual_latent(cur, prev);
  const auto params = stem_forward(Var<float>::constant(to_tensor<float>(cur)),
                                   Var<float>::constant(to_tensor<float>(prev)), StemFlags{}, QuantMode{}, w);
  const Tensor<float> mu = params.mu.value(), ls = params.log_scale.value();
  const PmfProvider shuffled = [&](std::size_t i, const LatentPlane&) {
    return discretize_laplacian(mu[i], ls[i]);  // channel-major indexing
  };
  bool differs = true;
  try {
    differs = decode_plane(chunk.y_stream, shuffled, LatentPlane(4, 6, 6), kPFrameScan) != res;
  } catch (const CorruptStreamError&) {
  }
  EXPECT_TRUE(differs);
}

TEST(StemWeightsFile, RoundtripAndFlags) {
  const auto w = init_stem<float>(micro_stem(), 10);
  const WeightsFile f = w.to_file(StemFlags{false, true, false});
  const auto back = stem_from_file<float>(WeightsFile::parse(f.serialize()));
  EXPECT_EQ(back.to_file(StemFlags{false, true, false}).serialize(), f.serialize());
  EXPECT_EQ(stem_trained_flags(f), (StemFlags{false, true, false}));
  EXPECT_EQ(StemFlags::from_bits(StemFlags{true, false, true}.bits()), (StemFlags{true, false, true}));
  EXPECT_EQ((StemFlags{false, false, true}).name(), "no_spm_tpm");
  EXPECT_THROW(StemFlags::from_bits(8), CorruptStreamError);
}

}  // namespace
}  // namespace mfvc
