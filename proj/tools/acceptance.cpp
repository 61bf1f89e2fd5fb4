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

// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero if any fails. Trained models are cached in the model directory and
// produced through the CLI from the toy recipe configs when missing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfvc/cli.hpp"
#include "mfvc/entropy.hpp"
#include "mfvc/error.hpp"
#include "mfvc/gradcheck.hpp"
#include "mfvc/metrics.hpp"
#include "mfvc/stem.hpp"
#include "mfvc/trainer.hpp"
#include "mfvc/video.hpp"

#ifndef MFVC_CONFIG_DIR
#define MFVC_CONFIG_DIR "configs"
#endif
#ifndef MFVC_MODEL_DIR
#define MFVC_MODEL_DIR "acceptance_models"
#endif

namespace fs = std::filesystem;
using namespace mfvc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Models

struct Variant {
  const char* name;
  std::vector<std::string> flag_args;
};

const std::vector<Variant> kVariants = {
    {"full", {}},
    {"no_spm", {"--spm", "false"}},
    {"no_spm_tpm", {"--spm", "false", "--tpm", "false"}},
    {"no_residual", {"--residual", "false"}},
};

void run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mfvc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::cerr << "$";
  for (const auto& a : args) std::cerr << ' ' << a;
  std::cerr << '\n';
  const int code = run(static_cast<int>(argv.size()), argv.data(), std::cerr, std::cerr);
  if (code != 0) throw Error("training command failed with exit code " + std::to_string(code));
}

struct TrainedSet {
  AutoencoderWeights<float> ae;
  std::map<std::string, CodecModels> models;  // by variant name
};

TrainedSet prepare_models(const fs::path& config_dir, const fs::path& model_dir) {
  fs::create_directories(model_dir);
  const fs::path ae = model_dir / "toy_image.mfw";
  if (!fs::exists(ae)) {
    const auto t0 = std::chrono::steady_clock::now();
    run_cli({"train-image", "--config", (config_dir / "toy_image.cfg").string(), "--output", ae.string(), "--log",
             (model_dir / "toy_image.csv").string()});
    std::cerr << fmt("auto-encoder trained in %.0f s\n", seconds_since(t0));
  }
  TrainedSet set;
  set.ae = load_autoencoder(ae.string());
  for (const Variant& v : kVariants) {
    const fs::path stem = model_dir / (std::string("toy_stem_") + v.name + ".mfw");
    if (!fs::exists(stem)) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<std::string> args = {"train-stem",  "--config", (config_dir / "toy_stem.cfg").string(),
                                       "--weights",   ae.string(), "--output",
                                       stem.string(), "--log",    (model_dir / (std::string("toy_stem_") + v.name + ".csv")).string()};
      args.insert(args.end(), v.flag_args.begin(), v.flag_args.end());
      run_cli(args);
      std::cerr << fmt("entropy model %s trained in %.0f s\n", v.name, seconds_since(t0));
    }
    set.models.emplace(v.name, CodecModels::load(ae.string(), stem.string()));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Micro models for the exhaustive and randomized checks

ImageCodecConfig micro_image() {
  ImageCodecConfig cfg;
  cfg.latent_channels = 4;
  cfg.hidden_channels = 6;
  cfg.hyper_channels = 3;
  return cfg;
}

StemConfig micro_stem(int channels = 4) {
  StemConfig cfg;
  cfg.latent_channels = channels;
  cfg.hyper_channels = 5;
  cfg.tpm_channels = {6, 7, 8};
  cfg.spm_channels = 8;
  cfg.epm_channels = {12, 10};
  return cfg;
}

StemFlags random_flags(std::mt19937_64& rng) { return StemFlags::from_bits(static_cast<std::uint8_t>(rng() % 8)); }

LatentPlane random_plane(int c, int h, int w, int spread, std::mt19937_64& rng) {
  LatentPlane p(c, h, w);
  for (auto& v : p.values) v = static_cast<int>(rng() % (2 * spread + 1)) - spread;
  return p;
}

Frame random_frame(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 255);
  Frame f(Shape{1, 3, h, w});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(level(rng)) / 255.0f;
  return f;
}

// Decodes a whole stream, keeping the latents.
std::vector<DecodedVideoFrame> decode_all(std::span<const std::uint8_t> bytes, const CodecModels& models) {
  VideoDecoder dec(bytes, models);
  std::vector<DecodedVideoFrame> out;
  while (auto f = dec.next()) out.push_back(std::move(*f));
  return out;
}

// ---------------------------------------------------------------------------
// 1. Losslessness

Outcome check_lossless() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  int pframe_ok = 0, video_ok = 0, escapes = 0;
  const int cases = 1000;
  for (int k = 0; k < cases; ++k) {
    const auto seed = static_cast<std::uint64_t>(rng());
    auto stem = init_stem<float>(micro_stem(), seed);
    stem.set_trainable(false);
    const StemFlags flags = random_flags(rng);

    const int h = 1 + static_cast<int>(rng() % 10), w = 1 + static_cast<int>(rng() % 10);
    const LatentPlane prev = random_plane(4, h, w, 1 + static_cast<int>(rng() % 20), rng);
    LatentPlane cur = prev;
    const int jitter = static_cast<int>(rng() % 4);
    for (auto& v : cur.values) v += static_cast<int>(rng() % (2 * jitter + 1)) - jitter;
    if (k % 10 == 0) {
      cur.values[rng() % cur.values.size()] = static_cast<int>(rng() % 200000) - 100000;
      ++escapes;
    }
    if (decode_pframe(encode_pframe(cur, prev, flags, stem), prev, flags, stem) == cur) ++pframe_ok;

    auto ae = init_autoencoder<float>(micro_image(), seed + 1);
    ae.set_trainable(false);
    const CodecModels models = CodecModels::from(ae, stem, flags);
    const int fh = 4 + static_cast<int>(rng() % 13), fw = 4 + static_cast<int>(rng() % 13);
    std::vector<Frame> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(random_frame(fh, fw, rng));
    GopConfig g;
    g.gop_size = 1 + static_cast<int>(rng() % 3);
    g.rate_index = static_cast<int>(rng() % 3);
    g.flags = flags;
    const EncodedVideo enc = compress_video(frames, models, g);
    const auto dec = decode_all(enc.stream.serialize(), models);
    bool same = dec.size() == frames.size();
    for (std::size_t t = 0; same && t < dec.size(); ++t) same = dec[t].latent == enc.latents[t];
    if (same) ++video_ok;
  }
  const double secs = seconds_since(t0);
  return {pframe_ok == cases && video_ok == cases && secs < 120,
          fmt("P-frame %d/%d, video %d/%d exact (%d with escapes), %.1f s", pframe_ok, cases, video_ok, cases, escapes,
              secs)};
}

// ---------------------------------------------------------------------------
// 2. No error propagation

Outcome check_no_drift(const CodecModels& models) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthOptions o;
  o.shift_x = 1;
  o.shift_y = 1;
  const auto frames = synth_sequence(SynthKind::kTranslate, 100, 64, 64, 2024, o);
  GopConfig g;
  g.gop_size = 10;
  g.rate_index = 1;
  const EncodedVideo enc = compress_video(frames, models, g);
  const auto dec = decode_all(enc.stream.serialize(), models);
  const RateIndex rate = rate_index(models.ae.config, g.rate_index);
  int identical = 0;
  std::vector<double> gap;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const IFrameResult alone = compress_iframe(frames[t], rate, models.ae);
    const DecodedFrame ref = decompress_iframe(alone.chunk, rate, 64, 64, models.ae);
    if (t < dec.size() && dec[t].frame == ref.frame) ++identical;
    if (t < dec.size()) gap.push_back(psnr(frames[t], dec[t].frame) - psnr(frames[t], ref.frame));
  }
  // Variance of the PSNR gap grouped by GOP position.
  double var = 0;
  const double m = std::accumulate(gap.begin(), gap.end(), 0.0) / std::max<std::size_t>(1, gap.size());
  for (double d : gap) var += (d - m) * (d - m);
  var /= std::max<std::size_t>(1, gap.size());
  const double secs = seconds_since(t0);
  return {identical == 100 && var == 0.0 && secs < 300,
          fmt("%d/100 frames bit-identical to standalone intra decoding, PSNR gap variance %.3g, %.1f s", identical, var,
              secs)};
}

// ---------------------------------------------------------------------------
// 3. Rate-estimate fidelity

Outcome check_rate_estimate(const CodecModels& models) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  int ok = 0;
  double worst = 0;
  std::size_t min_symbols = SIZE_MAX;
  for (int trial = 0; trial < 100; ++trial) {
    const RateIndex rate = rate_index(models.ae.config, static_cast<int>(rng() % 3));
    SynthOptions o;
    o.shift_x = static_cast<int>(rng() % 5) - 2;
    o.shift_y = static_cast<int>(rng() % 5) - 2;
    const auto seq = synth_sequence(SynthKind::kTranslate, 2, 64, 64, 5000 + static_cast<std::uint64_t>(trial), o);
    double estimate = 0, actual = 0;
    std::size_t symbols = 0;
    if (trial % 2 == 0) {
      const IFrameResult r = compress_iframe(seq[0], rate, models.ae);
      estimate = r.estimated_bits;
      actual = 8.0 * static_cast<double>(r.chunk.z_stream.size() + r.chunk.y_stream.size());
      symbols = r.latent.values.size();
    } else {
      const LatentPlane prev = quantize_round(analyze_frame(seq[0], rate, models.ae));
      const LatentPlane cur = quantize_round(analyze_frame(seq[1], rate, models.ae));
      const PFrameRate est = p_frame_rate(cur, prev, models.trained_flags, models.stem);
      const FrameChunk c = encode_pframe(cur, prev, models.trained_flags, models.stem);
      estimate = est.y_bits + est.z_bits;
      actual = 8.0 * static_cast<double>(c.z_stream.size() + c.y_stream.size());
      symbols = cur.values.size();
    }
    min_symbols = std::min(min_symbols, symbols);
    const double err = std::fabs(estimate - actual);
    worst = std::max(worst, err / (0.02 * actual + 128));
    if (symbols >= 4096 && err <= 0.02 * actual + 128) ++ok;
  }
  const double secs = seconds_since(t0);
  return {ok == 100 && secs < 60,
          fmt("%d/100 within 2%% + 128 bits (worst at %.2f of the bound, planes of %zu symbols), %.1f s", ok, worst,
              min_symbols, secs)};
}

// ---------------------------------------------------------------------------
// 4. Entropy model correctness

Outcome check_entropy_model() {
  const double closed = 1.0 - std::exp(-0.5);  // F(0.5) - F(-0.5) for mu 0, b 1
  const double p0 = laplace_bin_probabilities(0.0, 0.0, kDefaultSupportMin, kDefaultSupportMax)
      [static_cast<std::size_t>(-kDefaultSupportMin)];
  const double p1_closed = 0.5 * (std::exp(-0.5) - std::exp(-1.5));
  const double p1 = laplace_bin_probabilities(0.0, 0.0, kDefaultSupportMin, kDefaultSupportMax)
      [static_cast<std::size_t>(1 - kDefaultSupportMin)];
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> mu(-300.0, 300.0), ls(-8.0, 8.0);
  int bad = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    const int lo = -static_cast<int>(rng() % 200), hi = static_cast<int>(rng() % 200);
    const DiscretePmf pmf = discretize_laplacian(mu(rng), ls(rng), lo, hi);
    std::uint64_t total = pmf.overflow_freq;
    std::uint32_t least = pmf.overflow_freq;
    for (auto f : pmf.freq) {
      total += f;
      least = std::min(least, f);
    }
    if (total != kFreqTotal || least < 1) ++bad;
  }
  const bool pass = std::fabs(p0 - 0.39347) <= 1e-4 && std::fabs(p0 - closed) <= 1e-12 &&
                    std::fabs(p1 - p1_closed) <= 1e-12 && bad == 0;
  return {pass, fmt("p(0) = %.6f (closed form %.6f), p(1) = %.6f, %d/%d random tables sum to 2^16 with floor 1", p0,
                    closed, p1, trials - bad, trials)};
}

// ---------------------------------------------------------------------------
// 5. Gradient checks

template <typename T>
Tensor<T> uniform_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

Tensor<double> signed_away_from_zero(Shape s, std::mt19937_64& rng) {
  auto t = uniform_tensor<double>(s, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (rng() % 2) t[i] = -t[i];
  return t;
}

Tensor<double> integer_latent(Shape s, int spread, std::mt19937_64& rng) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(static_cast<int>(rng() % (2 * spread + 1)) - spread);
  return t;
}

// Worst norm-wise error over every parameter tensor and the input.
template <typename Loss>
double model_gradient_error(const std::vector<ParamRef<double>>& params, const Loss& loss) {
  double worst = 0;
  for (const auto& p : params) {
    const Var<double> saved = *p.var;
    const ScalarFn<double> f = [&](const Var<double>& x) {
      *p.var = x;
      Var<double> l = loss();
      *p.var = saved;
      return l;
    };
    worst = std::max(worst, finite_diff_check_norm(f, saved.value(), 1e-5));
  }
  return worst;
}

Outcome check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  using V = Var<double>;
  std::mt19937_64 rng(505);
  const double h = 1e-5;
  std::vector<std::pair<std::string, double>> errors;
  auto record = [&](const std::string& name, double e) { errors.emplace_back(name, e); };

  const auto x = uniform_tensor<double>(Shape{2, 2, 16, 16}, rng, -1, 1);
  const auto w16 = uniform_tensor<double>(Shape{2, 2, 16, 16}, rng, -1, 1);
  auto weighted = [](const V& v, const Tensor<double>& w) { return sum(mul_const(v, w)); };

  auto conv = make_conv<double>(2, 3, 3, 2, rng);
  const auto w8 = uniform_tensor<double>(Shape{2, 3, 8, 8}, rng, -1, 1);
  record("conv2d/input", finite_diff_check<double>([&](const V& v) { return weighted(conv2d(v, conv), w8); }, x, h));
  record("conv2d/kernel", finite_diff_check<double>(
                              [&](const V& k) {
                                auto l = conv;
                                l.kernel = k;
                                return weighted(conv2d(V::constant(x), l), w8);
                              },
                              conv.kernel.value(), h));
  record("conv2d/bias", finite_diff_check<double>(
                            [&](const V& b) {
                              auto l = conv;
                              l.bias = b;
                              return weighted(conv2d(V::constant(x), l), w8);
                            },
                            conv.bias.value(), h));

  auto tconv = make_transpose_conv<double>(2, 2, 5, 2, rng);
  const auto x8 = uniform_tensor<double>(Shape{2, 2, 8, 8}, rng, -1, 1);
  record("transpose_conv2d/input",
         finite_diff_check<double>([&](const V& v) { return weighted(transpose_conv2d(v, tconv), w16); }, x8, h));
  record("transpose_conv2d/kernel", finite_diff_check<double>(
                                        [&](const V& k) {
                                          auto l = tconv;
                                          l.kernel = k;
                                          return weighted(transpose_conv2d(V::constant(x8), l), w16);
                                        },
                                        tconv.kernel.value(), h));

  auto mconv = make_masked_conv<double>(2, 2, 5, rng);
  record("masked_conv2d/input",
         finite_diff_check<double>([&](const V& v) { return weighted(masked_conv2d(v, mconv), w16); }, x, h));
  record("masked_conv2d/kernel", finite_diff_check<double>(
                                     [&](const V& k) {
                                       auto l = mconv;
                                       l.kernel = k;
                                       return weighted(masked_conv2d(V::constant(x), l), w16);
                                     },
                                     mconv.kernel.value(), h));

  const auto xs = signed_away_from_zero(Shape{2, 2, 16, 16}, rng);
  record("leaky_relu", finite_diff_check<double>([&](const V& v) { return weighted(leaky_relu(v, 0.2), w16); }, xs, h));

  const auto a = uniform_tensor<double>(Shape{2, 2, 16, 16}, rng, 0.5, 2.0);
  const auto bc = V::constant(uniform_tensor<double>(Shape{2, 2, 16, 16}, rng, 0.5, 2.0));
  const std::vector<std::pair<std::string, ScalarFn<double>>> elementwise = {
      {"add", [&](const V& v) { return weighted(add(v, bc), w16); }},
      {"sub", [&](const V& v) { return weighted(sub(bc, v), w16); }},
      {"mul", [&](const V& v) { return sum(mul(v, bc)); }},
      {"div", [&](const V& v) { return weighted(div(bc, v), w16); }},
      {"add_scalar/mean", [&](const V& v) { return mean(mul_const(add_scalar(v, 2.0), w16)); }},
      {"scale", [&](const V& v) { return weighted(scale(v, -1.7), w16); }},
      {"pow_scalar", [&](const V& v) { return weighted(pow_scalar(v, 0.7), w16); }},
      {"clamp", [&](const V& v) { return weighted(clamp(v, 0.0, 10.0), w16); }},
      {"concat/slice_channels",
       [&](const V& v) {
         return sum(mul(slice_channels(concat_channels(v, bc), 1, 2), slice_channels(concat_channels(bc, v), 1, 2)));
       }},
      {"slice_batch", [&](const V& v) { return sum(mul(slice_batch(v, 1), slice_batch(v, 0))); }},
      {"crop_spatial", [&](const V& v) { return sum(mul(crop_spatial(v, 9, 11), crop_spatial(bc, 9, 11))); }},
      {"avg_pool2", [&](const V& v) { return sum(mul(avg_pool2(v), avg_pool2(bc))); }},
      {"add_uniform_noise", [&](const V& v) { return sum(mul(add_uniform_noise(v, 3), v)); }},
  };
  for (const auto& [name, f] : elementwise) record(name, finite_diff_check(f, a, h));

  const std::vector<double> taps = {0.1, 0.2, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.01, 0.005, 0.005};
  const auto w6 = uniform_tensor<double>(Shape{2, 2, 6, 6}, rng, -1, 1);
  record("gaussian_blur_valid",
         finite_diff_check<double>([&](const V& v) { return weighted(gaussian_blur_valid(v, taps), w6); }, x, h));

  const auto table = uniform_tensor<double>(Shape{3, 2, 1, 1}, rng, -1, 1);
  const auto bias = uniform_tensor<double>(Shape{3, 2, 1, 1}, rng, -1, 1);
  const std::vector<int> rates = {2, 0};
  record("conditional_scale/input", finite_diff_check<double>(
                                        [&](const V& v) {
                                          return weighted(conditional_scale(v, V::constant(table), V::constant(bias), rates), w16);
                                        },
                                        x, h));
  record("conditional_scale/table", finite_diff_check<double>(
                                        [&](const V& s) {
                                          return weighted(conditional_scale(V::constant(x), s, V::constant(bias), rates), w16);
                                        },
                                        table, h));
  record("conditional_scale/bias", finite_diff_check<double>(
                                       [&](const V& b) {
                                         return weighted(conditional_scale(V::constant(x), V::constant(table), b, rates), w16);
                                       },
                                       bias, h));
  const auto p = uniform_tensor<double>(Shape{1, 2, 1, 1}, rng, -1, 1);
  record("broadcast_channels",
         finite_diff_check<double>([&](const V& v) { return weighted(broadcast_channels(v, x.shape()), w16); }, p, h));

  const auto y = uniform_tensor<double>(Shape{1, 2, 16, 16}, rng, -3, 3);
  const auto mu = uniform_tensor<double>(Shape{1, 2, 16, 16}, rng, -1, 1);
  const auto ls = uniform_tensor<double>(Shape{1, 2, 16, 16}, rng, -0.3, 1.5);
  record("laplace_bits/y", finite_diff_check<double>(
                               [&](const V& v) { return sum(laplace_bits(v, V::constant(mu), V::constant(ls))); }, y, h));
  record("laplace_bits/mu", finite_diff_check<double>(
                                [&](const V& v) { return sum(laplace_bits(V::constant(y), v, V::constant(ls))); }, mu, h));
  record("laplace_bits/log_scale",
         finite_diff_check<double>([&](const V& v) { return sum(laplace_bits(V::constant(y), V::constant(mu), v)); }, ls,
                                   h));

  const auto img_a = uniform_tensor<double>(Shape{1, 3, 16, 16}, rng, 0, 1);
  const auto img_b = uniform_tensor<double>(Shape{1, 3, 16, 16}, rng, 0, 1);
  record("ms_ssim", finite_diff_check_norm<double>([&](const V& v) { return ms_ssim(v, V::constant(img_b), 1); },
                                                   img_a, 1e-4));

  // Losses: every parameter tensor of a micro model, plus the input frames.
  ImageCodecConfig ic = micro_image();
  ic.lambdas = {10.0, 100.0, 1000.0};
  auto ae = init_autoencoder<double>(ic, 6);
  const int loss_rates[] = {0, 2};
  const QuantMode noisy{true, 4};
  const auto frames = uniform_tensor<double>(Shape{2, 3, 16, 16}, rng, 0, 1);
  for (const Distortion d : {Distortion::kMse, Distortion::kMsSsim}) {
    const std::string tag = std::string("loss_i/") + distortion_name(d);
    record(tag + "/params", model_gradient_error(ae.params(), [&] {
             return loss_i(V::constant(frames), loss_rates, noisy, d, ae).loss;
           }));
  }
  ae.set_trainable(false);
  record("loss_i/frames", finite_diff_check_norm<double>(
                              [&](const V& v) { return loss_i(v, loss_rates, noisy, Distortion::kMse, ae).loss; }, frames,
                              1e-5));

  StemConfig sc;
  sc.latent_channels = 4;
  sc.hyper_channels = 3;
  sc.tpm_channels = {4, 5, 6};
  sc.spm_channels = 5;
  sc.epm_channels = {7, 6};
  std::mt19937_64 lat(3);
  const auto yt = V::constant(integer_latent(Shape{2, 4, 4, 4}, 1, lat));
  const auto yp = V::constant(integer_latent(Shape{2, 4, 4, 4}, 1, lat));
  for (const StemFlags flags : {StemFlags{}, StemFlags{false, true, true}, StemFlags{false, false, true},
                                StemFlags{true, true, false}}) {
    auto stem = init_stem<double>(sc, 6);
    const QuantMode mode{true, 5};
    // The 16-bit cap uses a surrogate gradient; the check is only meaningful below it.
    const StemForward<double> f = stem_forward(yt, yp, flags, mode, stem);
    double peak = 0;
    for (const auto* bits : {&f.y_bits, &f.z_bits})
      for (std::size_t i = 0; i < bits->value().size(); ++i) peak = std::max(peak, bits->value()[i]);
    const double e = model_gradient_error(stem.params(), [&] { return loss_p(yt, yp, flags, mode, stem); });
    record("loss_p/" + flags.name(), peak < 16.0 ? e : 1.0);
  }

  double worst = 0;
  std::string worst_name;
  std::string failures;
  for (const auto& [name, e] : errors) {
    if (e > worst) worst = e, worst_name = name;
    if (!(e <= 1e-3)) failures += " " + name;
  }
  const double secs = seconds_since(t0);
  return {failures.empty() && secs < 120,
          fmt("%zu checks, worst relative error %.2e (%s), %.1f s%s%s", errors.size(), worst, worst_name.c_str(), secs,
              failures.empty() ? "" : ", failing:", failures.c_str())};
}

// ---------------------------------------------------------------------------
// Shared evaluation sequences: slow translation, one GOP of 12 frames each.

struct GopBits {
  double i_bits = 0;  // mean over I-frames
  double p_bits = 0;  // mean over P-frames
  double total = 0;
};

std::vector<std::vector<Frame>> low_motion_sequences() {
  const int dirs[][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}};
  std::vector<std::vector<Frame>> out;
  for (int i = 0; i < 6; ++i) {
    SynthOptions o;
    o.shift_x = dirs[i][0];
    o.shift_y = dirs[i][1];
    out.push_back(synth_sequence(SynthKind::kTranslate, 12, 64, 64, 7000 + static_cast<std::uint64_t>(i), o));
  }
  return out;
}

GopBits measure(const std::vector<std::vector<Frame>>& seqs, const CodecModels& models, int rate, int gop) {
  GopBits b;
  int ni = 0, np = 0;
  for (const auto& seq : seqs) {
    GopConfig g;
    g.gop_size = gop;
    g.rate_index = rate;
    g.flags = models.trained_flags;
    const EncodedVideo enc = compress_video(seq, models, g);
    for (const FrameStats& s : enc.stats) {
      const double bits = 8.0 * static_cast<double>(s.bytes);
      b.total += bits;
      if (s.type == FrameType::kIntra) {
        b.i_bits += bits;
        ++ni;
      } else {
        b.p_bits += bits;
        ++np;
      }
    }
  }
  b.i_bits /= std::max(1, ni);
  b.p_bits /= std::max(1, np);
  return b;
}

// 6. P-frames cheaper than I-frames after the toy recipe.
Outcome check_training_efficacy(const CodecModels& full, const std::vector<std::vector<Frame>>& seqs) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (int r = 0; r < full.ae.config.rates(); ++r) {
    const GopBits b = measure(seqs, full, r, 12);
    const double ratio = b.p_bits / b.i_bits;
    pass = pass && ratio <= 0.8;
    detail += fmt("%srate %d: P/I %.0f/%.0f = %.3f", r ? ", " : "", r, b.p_bits, b.i_bits, ratio);
  }
  return {pass && seconds_since(t0) < 300, detail + fmt(", %.1f s", seconds_since(t0))};
}

// 7. Ablation ordering.
Outcome check_ablation(const TrainedSet& set, const std::vector<std::vector<Frame>>& seqs) {
  std::map<std::string, double> bits;
  for (const Variant& v : kVariants)
    for (int r = 0; r < set.ae.config.rates(); ++r) bits[v.name] += measure(seqs, set.models.at(v.name), r, 12).total;
  double anchor = 0;
  for (int r = 0; r < set.ae.config.rates(); ++r) anchor += measure(seqs, set.models.at("full"), r, 1).total;
  const double full = bits["full"], no_spm = bits["no_spm"], no_both = bits["no_spm_tpm"], no_res = bits["no_residual"];
  const bool pass = no_spm >= 1.01 * full && no_both >= 1.01 * no_spm && no_res >= full;
  auto saving = [&](double b) { return 100.0 * (1.0 - b / anchor); };
  return {pass, fmt("savings vs intra-only: full %.2f%%, no_spm %.2f%%, no_spm_tpm %.2f%%, no_residual %.2f%%; "
                    "gaps %.2f%% and %.2f%%",
                    saving(full), saving(no_spm), saving(no_both), saving(no_res), 100.0 * (no_spm / full - 1.0),
                    100.0 * (no_both / no_spm - 1.0))};
}

// 8. Variable rate from a single pair of models.
Outcome check_variable_rate(const CodecModels& full) {
  std::vector<double> bpp_at, mse_at;
  bool lossless = true;
  const auto seqs = low_motion_sequences();
  for (int r = 0; r < full.ae.config.rates(); ++r) {
    double bits = 0, mse = 0;
    int frames = 0;
    for (const auto& seq : seqs) {
      GopConfig g;
      g.gop_size = 12;
      g.rate_index = r;
      const EncodedVideo enc = compress_video(seq, full, g);
      const auto dec = decode_all(enc.stream.serialize(), full);
      lossless = lossless && dec.size() == seq.size();
      for (std::size_t t = 0; t < dec.size(); ++t) {
        lossless = lossless && dec[t].latent == enc.latents[t];
        mse += mse_8bit(seq[t], dec[t].frame);
        ++frames;
      }
      bits += 8.0 * static_cast<double>(enc.stream.total_bytes());
    }
    bpp_at.push_back(bits / (64.0 * 64.0 * frames));
    mse_at.push_back(mse / frames);
  }
  bool monotone = bpp_at.size() >= 3;
  std::string detail;
  for (std::size_t i = 0; i < bpp_at.size(); ++i) {
    if (i > 0) monotone = monotone && bpp_at[i] >= 0.95 * bpp_at[i - 1] && mse_at[i] <= 1.05 * mse_at[i - 1];
    detail += fmt("%slambda %g: %.4f bpp, MSE %.2f", i ? ", " : "", full.ae.config.lambdas[i], bpp_at[i], mse_at[i]);
  }
  return {monotone && lossless, detail + (lossless ? "; lossless at every index" : "; latent mismatch")};
}

// ---------------------------------------------------------------------------
// 9. Metrics oracles

Outcome check_metrics() {
  const Frame zero(Shape{1, 3, 32, 32});
  Frame sixteen(Shape{1, 3, 32, 32});
  sixteen.fill(16.0f / 255.0f);
  const double p = psnr(zero, sixteen);
  const double p_oracle = 10.0 * std::log10(255.0 * 255.0 / 256.0);

  const Frame tex = synth_texture(176, 176, 9);
  const double self = ms_ssim(tex, tex, 5);

  const std::vector<RdPoint> anchor = {{0.1, 30.0}, {0.2, 33.0}, {0.4, 35.5}, {0.8, 38.0}};
  std::vector<RdPoint> doubled = anchor;
  for (auto& pt : doubled) pt.bpp *= 2;
  const double same = bd_rate(anchor, anchor);
  const double twice = bd_rate(anchor, doubled);
  const bool pass = std::fabs(p - 24.048) <= 1e-3 && std::fabs(p - p_oracle) < 1e-6 && std::fabs(self - 1.0) <= 1e-6 &&
                    std::fabs(same) < 1e-9 && std::fabs(twice - 100.0) <= 1.0;
  return {pass, fmt("psnr %.4f dB, ms_ssim(x, x) %.8f, bd_rate(A, A) %.2g%%, bd_rate at twice the rate %.4f%%", p, self,
                    same, twice)};
}

// ---------------------------------------------------------------------------
// 10. Spatial prior causality and serial decoding

Outcome check_causality_and_serial(const CodecModels& full) {
  auto stem = init_stem<float>(micro_stem(1), 10);
  stem.set_trainable(false);
  std::mt19937_64 rng(1010);
  const LatentPlane base = random_plane(1, 8, 8, 5, rng);
  const Tensor<float> ref = spatial_prior(base, stem);
  const int channels = ref.shape().c;
  int violations = 0, perturbations = 0, influenced = 0;
  for (int j = 0; j < 64; ++j) {
    for (int delta : {-9, -1, 1, 9}) {
      LatentPlane q = base;
      q.at(0, j / 8, j % 8) += delta;
      const Tensor<float> out = spatial_prior(q, stem);
      ++perturbations;
      bool later_changed = false;
      for (int i = 0; i < 64; ++i)
        for (int s = 0; s < channels; ++s) {
          const bool changed = out(0, s, i / 8, i % 8) != ref(0, s, i / 8, i % 8);
          if (i <= j && changed) ++violations;
          if (i > j && changed) later_changed = true;
        }
      if (later_changed) ++influenced;
    }
  }

  // Serial decode: time should scale with the number of latent positions.
  std::mt19937_64 trng(1011);
  const int c = full.ae.config.latent_channels;
  auto decode_time = [&](int side) {
    const LatentPlane prev = random_plane(c, side, side, 2, trng);
    LatentPlane cur = prev;
    for (auto& v : cur.values) v += static_cast<int>(trng() % 3) - 1;
    const FrameChunk chunk = encode_pframe(cur, prev, full.trained_flags, full.stem);
    double best = 1e9;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const LatentPlane got = decode_pframe(chunk, prev, full.trained_flags, full.stem);
      best = std::min(best, seconds_since(t0));
      if (got != cur) return -1.0;
    }
    return best;
  };
  const double t16 = decode_time(16), t32 = decode_time(32);
  const double ratio = t32 / t16;
  const bool serial = t16 > 0 && t32 > 0 && ratio >= 3.0 && ratio <= 5.0;
  // Positions other than the last must influence something downstream.
  return {violations == 0 && influenced == perturbations - 4 && serial,
          fmt("%d perturbations, %d causality violations, %d reach later positions; decode %.3f s at 16x16, %.3f s at "
              "32x32, ratio %.2f (area ratio 4)",
              perturbations, violations, influenced, t16, t32, ratio)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path model_dir = argc > 1 ? fs::path(argv[1]) : fs::path(MFVC_MODEL_DIR);
  const fs::path config_dir = argc > 2 ? fs::path(argv[2]) : fs::path(MFVC_CONFIG_DIR);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ' ' << name << ": " << o.detail << std::endl;
  };

  std::optional<TrainedSet> set;
  try {
    set = prepare_models(config_dir, model_dir);
  } catch (const std::exception& e) {
    std::cerr << "model preparation failed: " << e.what() << '\n';
  }
  auto with_models = [&set](auto check) {
    return [&set, check]() -> Outcome {
      if (!set) return {false, "trained models unavailable"};
      return check(*set);
    };
  };
  const auto seqs = low_motion_sequences();

  report(1, "losslessness", check_lossless);
  report(2, "no error propagation", with_models([](const TrainedSet& s) { return check_no_drift(s.models.at("full")); }));
  report(3, "rate estimate", with_models([](const TrainedSet& s) { return check_rate_estimate(s.models.at("full")); }));
  report(4, "entropy model", check_entropy_model);
  report(5, "gradient checks", check_gradients);
  report(6, "training efficacy",
         with_models([&seqs](const TrainedSet& s) { return check_training_efficacy(s.models.at("full"), seqs); }));
  report(7, "ablation ordering", with_models([&seqs](const TrainedSet& s) { return check_ablation(s, seqs); }));
  report(8, "variable rate", with_models([](const TrainedSet& s) { return check_variable_rate(s.models.at("full")); }));
  report(9, "metrics oracles", check_metrics);
  report(10, "spatial causality and serial decode",
         with_models([](const TrainedSet& s) { return check_causality_and_serial(s.models.at("full")); }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
