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
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "mfvc/error.hpp"
#include "mfvc/gradcheck.hpp"
#include "mfvc/trainer.hpp"
#include "mfvc/video.hpp"

namespace mfvc {
namespace {

ImageCodecConfig micro_image() {
  ImageCodecConfig cfg;
  cfg.latent_channels = 4;
  cfg.hidden_channels = 6;
  cfg.hyper_channels = 3;
  cfg.lambdas = {10.0, 100.0, 1000.0};
  return cfg;
}

StemConfig micro_stem() {
  StemConfig cfg;
  cfg.latent_channels = 4;
  cfg.hyper_channels = 3;
  cfg.tpm_channels = {4, 5, 6};
  cfg.spm_channels = 5;
  cfg.epm_channels = {7, 6};
  return cfg;
}

TrainConfig micro_train(int iters) {
  TrainConfig cfg;
  cfg.lambda_set = {10.0, 100.0, 1000.0};
  cfg.batch_size = 2;
  cfg.patch_h = 16;
  cfg.patch_w = 16;
  cfg.lr_values = {3e-3};
  cfg.lr_boundaries = {};
  cfg.total_iters = iters;
  cfg.seed = 3;
  return cfg;
}

Tensor<double> random_batch(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<double> t(Shape{n, 3, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

Tensor<double> random_latent(int n, int c, int h, int w, int spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> t(Shape{n, c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<int>(rng() % (2 * spread + 1)) - spread);
  return t;
}

// Worst norm-wise relative error over every parameter tensor of a model.
template <typename Loss>
double worst_param_error(const std::vector<ParamRef<double>>& params, const Loss& loss, double h) {
  double worst = 0;
  for (const auto& p : params) {
    const Var<double> saved = *p.var;
    const ScalarFn<double> f = [&](const Var<double>& x) {
      *p.var = x;
      Var<double> l = loss();
      *p.var = saved;
      return l;
    };
    const double err = finite_diff_check_norm(f, saved.value(), h);
    EXPECT_LT(err, 1e-3) << p.name << " " << saved.shape().str();
    worst = std::max(worst, err);
  }
  return worst;
}

TEST(LrSchedule, BoundarySemantics) {
  TrainConfig cfg;
  cfg.lr_values = {1e-4, 5e-5};
  cfg.lr_boundaries = {100};
  EXPECT_EQ(lr_at(0, cfg), 1e-4);
  EXPECT_EQ(lr_at(99, cfg), 1e-4);
  EXPECT_EQ(lr_at(100, cfg), 5e-5);
  EXPECT_EQ(lr_at(1000000, cfg), 5e-5);
  EXPECT_THROW(lr_at(-1, cfg), ConfigError);
}

TEST(LrSchedule, FullScaleStages) {
  TrainConfig cfg;
  cfg.lr_values = {1e-4, 5e-5, 1e-5, 5e-6, 1e-6};
  cfg.lr_boundaries = {1600000, 2100000, 2300000, 2400000, 2500000};
  EXPECT_NO_THROW(cfg.validate(16));
  EXPECT_EQ(lr_at(1599999, cfg), 1e-4);
  EXPECT_EQ(lr_at(1600000, cfg), 5e-5);
  EXPECT_EQ(lr_at(2100000, cfg), 1e-5);
  EXPECT_EQ(lr_at(2300000, cfg), 5e-6);
  EXPECT_EQ(lr_at(2400000, cfg), 1e-6);
  EXPECT_EQ(lr_at(2600000, cfg), 1e-6);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate(4));
  cfg.patch_h = 30;
  EXPECT_THROW(cfg.validate(4), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_boundaries = {1, 2, 3, 4};
  EXPECT_THROW(cfg.validate(4), ConfigError);
  cfg.lr_boundaries = {5, 5};
  EXPECT_THROW(cfg.validate(4), ConfigError);
  cfg = TrainConfig{};
  cfg.lambda_set = {};
  EXPECT_THROW(cfg.validate(4), ConfigError);
  EXPECT_EQ(parse_distortion("ms-ssim"), Distortion::kMsSsim);
  EXPECT_THROW(parse_distortion("l1"), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Var<double> p = Var<double>::parameter(Tensor<double>(Shape{1, 1, 1, 3}, 1.0));
  std::vector<ParamRef<double>> params{{"p", &p}};
  Tensor<double> g(Shape{1, 1, 1, 3});
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 1e-3;
  backward(sum(mul_const(p, g)));
  Adam<double> adam;
  EXPECT_EQ(adam.step(params, 0.01), 0);
  for (int i = 0; i < 3; ++i) {
    const double expected = 1.0 - 0.01 * (g[i] > 0 ? 1 : -1) / (1 + 1e-8 / std::fabs(g[i]));
    EXPECT_NEAR(p.value()[i], expected, 1e-12);
  }
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  Var<double> p = Var<double>::parameter(Tensor<double>(Shape{1, 1, 2, 2}, 0.25));
  std::vector<ParamRef<double>> params{{"p", &p}};
  backward(sum(mul_const(p, Tensor<double>(Shape{1, 1, 2, 2}))));
  Adam<double> adam;
  adam.step(params, 0.1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.value()[i], 0.25);
}

TEST(Adam, NonFiniteGradientIsSkippedAndCounted) {
  Var<double> a = Var<double>::parameter(Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
  Var<double> b = Var<double>::parameter(Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
  std::vector<ParamRef<double>> params{{"a", &a}, {"b", &b}};
  Tensor<double> ga(Shape{1, 1, 1, 2}, 1.0), gb(Shape{1, 1, 1, 2}, 1.0);
  gb[1] = std::numeric_limits<double>::quiet_NaN();
  backward(add(sum(mul_const(a, ga)), sum(mul_const(b, gb))));
  Adam<double> adam;
  EXPECT_EQ(adam.step(params, 0.1), 1);
  EXPECT_EQ(adam.skipped(), 1);
  EXPECT_LT(a.value()[0], 1.0);
  EXPECT_EQ(b.value()[0], 1.0);
  EXPECT_EQ(b.value()[1], 1.0);
}

TEST(LossI, IsRatePlusWeightedDistortion) {
  const auto w = init_autoencoder<double>(micro_image(), 5);
  const auto x = Var<double>::constant(random_batch(1, 16, 16, 1));
  for (int r = 0; r < 3; ++r) {
    const int rates[] = {r};
    for (Distortion d : {Distortion::kMse, Distortion::kMsSsim}) {
      const ImageLoss<double> l = loss_i(x, rates, QuantMode{true, 9}, d, w);
      EXPECT_NEAR(l.loss.value()[0], l.rate + micro_image().lambdas[r] * l.distortion, 1e-9);
      EXPECT_GT(l.rate, 0.0);
      EXPECT_GE(l.distortion, 0.0);
    }
  }
}

TEST(LossI, GradientsMatchFiniteDifferences) {
  auto w = init_autoencoder<double>(micro_image(), 6);
  const Tensor<double> x = random_batch(2, 16, 16, 2);
  const int rates[] = {0, 2};
  const QuantMode mode{true, 4};
  worst_param_error(w.params(), [&] { return loss_i(Var<double>::constant(x), rates, mode, Distortion::kMse, w).loss; },
                    1e-5);
  w.set_trainable(false);
  EXPECT_LT(finite_diff_check_norm<double>(
                [&](const Var<double>& v) { return loss_i(v, rates, mode, Distortion::kMse, w).loss; }, x, 1e-5),
            1e-3);
}

TEST(LossP, NonNegativeAndMatchesCodedBits) {
  auto w = init_stem<float>(micro_stem(), 7);
  w.set_trainable(false);
  const Tensor<double> yt = random_latent(1, 4, 8, 8, 3, 1), yp = random_latent(1, 4, 8, 8, 3, 2);
  const auto vt = Var<float>::constant(yt.cast<float>()), vp = Var<float>::constant(yp.cast<float>());
  for (const StemFlags flags : {StemFlags{}, StemFlags{false, true, true}, StemFlags{false, false, false}}) {
    const double per_symbol = loss_p(vt, vp, flags, QuantMode{}, w).value()[0];
    EXPECT_GE(per_symbol, 0.0);
    const FrameChunk c = encode_pframe(quantize_round(yt.cast<float>()), quantize_round(yp.cast<float>()), flags, w);
    const double actual = 8.0 * (c.z_stream.size() + c.y_stream.size());
    const double estimate = per_symbol * yt.size();
    EXPECT_LT(std::fabs(actual - estimate), 0.02 * actual + 128) << flags.name();
  }
}

TEST(LossP, GradientsMatchFiniteDifferences) {
  for (const StemFlags flags : {StemFlags{}, StemFlags{false, false, false}}) {
    auto w = init_stem<double>(micro_stem(), 6);
    const auto yt = Var<double>::constant(random_latent(2, 4, 4, 4, 1, 3));
    const auto yp = Var<double>::constant(random_latent(2, 4, 4, 4, 1, 4));
    // The 16-bit cap uses a surrogate gradient, so stay clear of it.
    const StemForward<double> f = stem_forward(yt, yp, flags, QuantMode{true, 5}, w);
    for (const auto* bits : {&f.y_bits, &f.z_bits})
      for (std::size_t i = 0; i < bits->value().size(); ++i) ASSERT_LT(bits->value()[i], 16.0);
    worst_param_error(w.params(), [&] { return loss_p(yt, yp, flags, QuantMode{true, 5}, w); }, 1e-5);
  }
}

TEST(LossP, IndependentOfTheSynthesisTransform) {
  auto ae = init_autoencoder<float>(micro_image(), 9);
  auto stem = init_stem<float>(micro_stem(), 9);
  stem.set_trainable(false);
  const Tensor<float> f0 = synth_texture(16, 16, 1), f1 = synth_texture(16, 16, 2);
  auto latents = [&] {
    ae.set_trainable(false);
    return std::pair{analyze_frame(f0, rate_index(ae.config, 1), ae), analyze_frame(f1, rate_index(ae.config, 1), ae)};
  };
  auto [a0, a1] = latents();
  const double before =
      loss_p(Var<float>::constant(round_tensor(a1)), Var<float>::constant(round_tensor(a0)), {}, {}, stem).value()[0];
  for (auto& l : ae.synthesis) l.kernel.mutable_value().flat().array() += 0.3f;
  auto [b0, b1] = latents();
  const double after =
      loss_p(Var<float>::constant(round_tensor(b1)), Var<float>::constant(round_tensor(b0)), {}, {}, stem).value()[0];
  EXPECT_EQ(before, after);
}

std::vector<Tensor<float>> eight_patches() {
  std::vector<Tensor<float>> out;
  for (int i = 0; i < 8; ++i) out.push_back(synth_texture(16, 16, 100 + i));
  return out;
}

double window_mean(const std::vector<TrainLogRow>& log, std::size_t begin, std::size_t count) {
  double s = 0;
  for (std::size_t i = begin; i < begin + count; ++i) s += log[i].loss;
  return s / count;
}

TEST(TrainImage, OverfitsAFixedBatch) {
  TrainConfig cfg = micro_train(500);
  cfg.batch_size = 8;
  TrainReport report;
  train_image_model(eight_patches(), micro_image(), cfg, &report);
  ASSERT_EQ(report.log.size(), 500u);
  EXPECT_LT(window_mean(report.log, 480, 20), 0.7 * window_mean(report.log, 0, 20));
  EXPECT_EQ(report.skipped_updates, 0);
}

TEST(TrainImage, DeterministicWithLogAndCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "mfvc_trainer_test";
  std::filesystem::create_directories(dir);
  TrainConfig cfg = micro_train(6);
  cfg.log_path = (dir / "log.csv").string();
  cfg.checkpoint_path = (dir / "ckpt.mfw").string();
  cfg.checkpoint_every = 3;
  const auto a = train_image_model(eight_patches(), micro_image(), cfg);
  cfg.log_path.clear();
  cfg.checkpoint_every = 0;
  const auto b = train_image_model(eight_patches(), micro_image(), cfg);
  EXPECT_EQ(a.to_file().serialize(), b.to_file().serialize());
  EXPECT_EQ(WeightsFile::load((dir / "ckpt.mfw").string()).serialize(), a.to_file().serialize());
  std::ifstream log(dir / "log.csv");
  std::string line;
  int rows = 0;
  std::getline(log, line);
  EXPECT_EQ(line, "iteration,lr,loss,rate,distortion");
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 6);
  cfg.seed = 4;
  EXPECT_NE(train_image_model(eight_patches(), micro_image(), cfg).to_file().serialize(), a.to_file().serialize());
  std::filesystem::remove_all(dir);
}

TEST(TrainImage, RejectsBadDatasets) {
  EXPECT_THROW(train_image_model({}, micro_image(), micro_train(1)), ConfigError);
  EXPECT_THROW(train_image_model({synth_texture(8, 16, 1)}, micro_image(), micro_train(1)), ConfigError);
}

std::vector<std::vector<Tensor<float>>> micro_clips() {
  std::vector<std::vector<Tensor<float>>> clips;
  for (int i = 0; i < 3; ++i) clips.push_back(synth_sequence(SynthKind::kTranslate, 7, 24, 24, 50 + i));
  return clips;
}

TEST(TrainStem, LeavesTheAutoencoderUntouchedAndLearns) {
  auto ae = init_autoencoder<float>(micro_image(), 10);
  ae.set_trainable(false);
  const auto before = ae.to_file().serialize();
  TrainConfig cfg = micro_train(150);
  TrainReport report;
  const auto stem = train_stem(micro_clips(), ae, micro_stem(), cfg, StemFlags{}, &report);
  EXPECT_EQ(ae.to_file().serialize(), before);
  EXPECT_LT(window_mean(report.log, 130, 20), window_mean(report.log, 0, 20));
  const auto again = train_stem(micro_clips(), ae, micro_stem(), micro_train(150), StemFlags{});
  EXPECT_EQ(stem.to_file().serialize(), again.to_file().serialize());
}

TEST(TrainStem, RejectsBadInput) {
  auto ae = init_autoencoder<float>(micro_image(), 10);
  ae.set_trainable(false);
  EXPECT_THROW(train_stem({{synth_texture(24, 24, 1)}}, ae, micro_stem(), micro_train(1), {}), ConfigError);
  StemConfig wide = micro_stem();
  wide.latent_channels = 5;
  EXPECT_THROW(train_stem(micro_clips(), ae, wide, micro_train(1), {}), ConfigError);
}

}  // namespace
}  // namespace mfvc
