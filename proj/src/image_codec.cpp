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

#include "mfvc/image_codec.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mfvc/error.hpp"
#include "mfvc/laplace.hpp"

namespace mfvc {
namespace {

// softplus(kUnitScale) == 1, so fresh rate tables start as the identity.
constexpr double kUnitScale = 0.54132485461291810;

template <typename T>
RateTable<T> make_rate_table(int rates, int channels) {
  return {Var<T>::parameter(Tensor<T>(Shape{rates, channels, 1, 1}, static_cast<T>(kUnitScale))),
          Var<T>::parameter(Tensor<T>(Shape{rates, channels, 1, 1}))};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void check_frame(const Tensor<float>& frame, const ImageCodecConfig& cfg) {
  const Shape s = frame.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("expected a (1, 3, H, W) frame, got " + s.str());
  latent_extent(s.h, cfg);
  latent_extent(s.w, cfg);
}

}  // namespace

void ImageCodecConfig::validate() const {
  if (latent_channels < 1 || hidden_channels < 1 || hyper_channels < 1) {
    throw ConfigError("image codec: channel counts must be positive");
  }
  if (stages < 1 || stages > 6) throw ConfigError("image codec: stages must be in [1, 6]");
  if (!(slope > 0 && slope < 1)) throw ConfigError("image codec: leaky slope must be in (0, 1)");
  if (lambdas.empty()) throw ConfigError("image codec: empty lambda set");
  for (double l : lambdas) {
    if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("image codec: lambdas must be finite and >= 0");
  }
}

RateIndex rate_index(const ImageCodecConfig& cfg, int index) {
  if (index < 0 || index >= cfg.rates()) {
    throw ConfigError("rate index " + std::to_string(index) + " outside the lambda set of size " +
                      std::to_string(cfg.rates()));
  }
  return {index, cfg.lambdas[static_cast<std::size_t>(index)]};
}

int latent_extent(int pixels, const ImageCodecConfig& cfg) {
  if (pixels <= 0 || pixels % cfg.factor() != 0) {
    throw ShapeError("frame extent " + std::to_string(pixels) + " is not a positive multiple of " +
                     std::to_string(cfg.factor()) + "; pad the frame first");
  }
  return pixels / cfg.factor();
}

int hyper_extent(int latent) { return ((latent + 1) / 2 + 1) / 2; }

template <typename T>
std::vector<ParamRef<T>> AutoencoderWeights<T>::params() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < analysis.size(); ++i) {
    const std::string p = "analysis." + std::to_string(i);
    add_layer_params(out, p, analysis[i]);
    out.push_back({p + ".rate_scale", &analysis_rate[i].scale});
    out.push_back({p + ".rate_bias", &analysis_rate[i].bias});
  }
  for (std::size_t i = 0; i < synthesis.size(); ++i) {
    const std::string p = "synthesis." + std::to_string(i);
    add_layer_params(out, p, synthesis[i]);
    if (i < synthesis_rate.size()) {
      out.push_back({p + ".rate_scale", &synthesis_rate[i].scale});
      out.push_back({p + ".rate_bias", &synthesis_rate[i].bias});
    }
  }
  for (std::size_t i = 0; i < hyper_enc.size(); ++i) add_layer_params(out, "hyper_enc." + std::to_string(i), hyper_enc[i]);
  for (std::size_t i = 0; i < hyper_dec.size(); ++i) add_layer_params(out, "hyper_dec." + std::to_string(i), hyper_dec[i]);
  out.push_back({"z_prior.mu", &z_mu});
  out.push_back({"z_prior.log_scale", &z_log_scale});
  return out;
}

template <typename T>
WeightsFile AutoencoderWeights<T>::to_file() const {
  WeightsFile f;
  f.put("config.image", pack_values({static_cast<double>(config.latent_channels),
                                     static_cast<double>(config.hidden_channels),
                                     static_cast<double>(config.hyper_channels),
                                     static_cast<double>(config.stages), config.slope}));
  f.put("config.lambdas", pack_values(config.lambdas));
  export_params(const_cast<AutoencoderWeights*>(this)->params(), f);
  return f;
}

template <typename T>
AutoencoderWeights<T> init_autoencoder(const ImageCodecConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int C = cfg.latent_channels, N = cfg.hidden_channels, H = cfg.hyper_channels, R = cfg.rates();
  AutoencoderWeights<T> w;
  w.config = cfg;
  for (int i = 0; i < cfg.stages; ++i) {
    const int out = i == cfg.stages - 1 ? C : N;
    w.analysis.push_back(make_conv<T>(i == 0 ? 3 : N, out, 5, 2, rng));
    w.analysis_rate.push_back(make_rate_table<T>(R, out));
  }
  for (int i = 0; i < cfg.stages; ++i) {
    const bool last = i == cfg.stages - 1;
    w.synthesis.push_back(make_transpose_conv<T>(i == 0 ? C : N, last ? 3 : N, 5, 2, rng));
    if (!last) w.synthesis_rate.push_back(make_rate_table<T>(R, N));
  }
  // Start reconstructions at mid-gray.
  w.synthesis.back().bias.mutable_value().fill(static_cast<T>(0.5));
  w.hyper_enc.push_back(make_conv<T>(C, H, 3, 1, rng));
  w.hyper_enc.push_back(make_conv<T>(H, H, 5, 2, rng));
  w.hyper_enc.push_back(make_conv<T>(H, H, 5, 2, rng));
  w.hyper_dec.push_back(make_transpose_conv<T>(H, H, 5, 2, rng));
  w.hyper_dec.push_back(make_transpose_conv<T>(H, H, 5, 2, rng));
  w.hyper_dec.push_back(make_conv<T>(H, 2 * C, 3, 1, rng));
  w.z_mu = Var<T>::parameter(Tensor<T>(Shape{1, H, 1, 1}));
  w.z_log_scale = Var<T>::parameter(Tensor<T>(Shape{1, H, 1, 1}));
  return w;
}

template <typename T>
AutoencoderWeights<T> autoencoder_from_file(const WeightsFile& file) {
  const auto v = unpack_values(file.get("config.image"));
  if (v.size() != 5) throw ConfigError("weights: malformed config.image");
  ImageCodecConfig cfg;
  cfg.latent_channels = static_cast<int>(v[0]);
  cfg.hidden_channels = static_cast<int>(v[1]);
  cfg.hyper_channels = static_cast<int>(v[2]);
  cfg.stages = static_cast<int>(v[3]);
  cfg.slope = v[4];
  cfg.lambdas = unpack_values(file.get("config.lambdas"));
  AutoencoderWeights<T> w = init_autoencoder<T>(cfg, 0);
  import_params(w.params(), file);
  return w;
}

AutoencoderWeights<float> load_autoencoder(const std::string& path) {
  auto w = autoencoder_from_file<float>(WeightsFile::load(path));
  w.set_trainable(false);
  return w;
}

template <typename T>
Var<T> analyze(const Var<T>& frames, std::span<const int> rates, const AutoencoderWeights<T>& w) {
  Var<T> x = frames;
  for (std::size_t i = 0; i < w.analysis.size(); ++i) {
    x = leaky_relu(apply(w.analysis[i], x), w.config.slope);
    x = conditional_scale(x, w.analysis_rate[i].scale, w.analysis_rate[i].bias, rates);
  }
  return x;
}

template <typename T>
Var<T> synthesize_raw(const Var<T>& latent, std::span<const int> rates, const AutoencoderWeights<T>& w) {
  if (latent.shape().c != w.config.latent_channels) {
    throw ShapeError("synthesize: latent has " + std::to_string(latent.shape().c) + " channels, model expects " +
                     std::to_string(w.config.latent_channels));
  }
  Var<T> x = latent;
  for (std::size_t i = 0; i < w.synthesis.size(); ++i) {
    x = apply(w.synthesis[i], x);
    if (i < w.synthesis_rate.size()) {
      x = leaky_relu(x, w.config.slope);
      x = conditional_scale(x, w.synthesis_rate[i].scale, w.synthesis_rate[i].bias, rates);
    }
  }
  return x;
}

template <typename T>
Var<T> hyper_analysis(const Var<T>& latent, const AutoencoderWeights<T>& w) {
  Var<T> x = latent;
  for (std::size_t i = 0; i < w.hyper_enc.size(); ++i) {
    x = apply(w.hyper_enc[i], x);
    if (i + 1 < w.hyper_enc.size()) x = leaky_relu(x, w.config.slope);
  }
  return x;
}

template <typename T>
LaplaceParams<T> hyper_synthesis(const Var<T>& z_hat, int height, int width, const AutoencoderWeights<T>& w) {
  Var<T> x = z_hat;
  for (std::size_t i = 0; i < w.hyper_dec.size(); ++i) {
    x = apply(w.hyper_dec[i], x);
    if (i + 1 < w.hyper_dec.size()) x = leaky_relu(x, w.config.slope);
  }
  x = crop_spatial(x, height, width);
  const int C = w.config.latent_channels;
  return {slice_channels(x, 0, C), clamp(slice_channels(x, C, C), kLogScaleMin, kLogScaleMax)};
}

template <typename T>
Var<T> z_prior_bits(const Var<T>& z_hat, const Var<T>& mu, const Var<T>& log_scale) {
  const Shape s = z_hat.shape();
  return laplace_bits(z_hat, broadcast_channels(mu, s),
                      clamp(broadcast_channels(log_scale, s), kLogScaleMin, kLogScaleMax));
}

template <typename T>
Var<T> quantize_like(const Var<T>& x, const QuantMode& mode, std::uint64_t stream) {
  if (mode.training) return add_uniform_noise(x, mix_seed(mode.seed, stream));
  return Var<T>::constant(round_tensor(x.value()));
}

template <typename T>
IFrameForward<T> iframe_forward(const Var<T>& frames, std::span<const int> rates, const QuantMode& mode,
                                const AutoencoderWeights<T>& w) {
  IFrameForward<T> f;
  f.latent = quantize_like(analyze(frames, rates, w), mode, 1);
  const Var<T> z = quantize_like(hyper_analysis(f.latent, w), mode, 2);
  const auto p = hyper_synthesis(z, f.latent.shape().h, f.latent.shape().w, w);
  f.y_bits = laplace_bits(f.latent, p.mu, p.log_scale);
  f.z_bits = z_prior_bits(z, w.z_mu, w.z_log_scale);
  f.recon = synthesize_raw(f.latent, rates, w);
  return f;
}

Tensor<float> analyze_frame(const Tensor<float>& frame, RateIndex rate, const AutoencoderWeights<float>& w) {
  check_frame(frame, w.config);
  rate_index(w.config, rate.index);
  const int r[1] = {rate.index};
  return analyze(Var<float>::constant(frame), r, w).value();
}

Tensor<float> synthesize(const LatentPlane& latent, RateIndex rate, const AutoencoderWeights<float>& w) {
  rate_index(w.config, rate.index);
  const int r[1] = {rate.index};
  Tensor<float> out = synthesize_raw(Var<float>::constant(to_tensor<float>(latent)), r, w).value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
  return out;
}

IEntropyParams i_entropy_params(const LatentPlane& latent, const AutoencoderWeights<float>& w) {
  if (latent.channels != w.config.latent_channels) {
    throw ShapeError("latent has " + std::to_string(latent.channels) + " channels, model expects " +
                     std::to_string(w.config.latent_channels));
  }
  IEntropyParams out;
  const Var<float> y = Var<float>::constant(to_tensor<float>(latent));
  out.z_hat = quantize_round(hyper_analysis(y, w).value());
  const Var<float> z = Var<float>::constant(to_tensor<float>(out.z_hat));
  const auto p = hyper_synthesis(z, latent.height, latent.width, w);
  out.mu = p.mu.value();
  out.log_scale = p.log_scale.value();
  out.z_bits = sum(z_prior_bits(z, w.z_mu.detach(), w.z_log_scale.detach())).value()[0];
  return out;
}

std::vector<DiscretePmf> z_prior_pmfs(const Tensor<float>& mu, const Tensor<float>& log_scale) {
  std::vector<DiscretePmf> pmfs;
  for (std::size_t c = 0; c < mu.size(); ++c) pmfs.push_back(discretize_laplacian(mu[c], log_scale[c]));
  return pmfs;
}

CodedStream encode_hyper(const LatentPlane& z_hat, const std::vector<DiscretePmf>& pmfs) {
  const std::size_t plane = static_cast<std::size_t>(z_hat.height) * z_hat.width;
  return encode_plane(z_hat, [&](std::size_t i, const LatentPlane&) { return pmfs[i / plane]; });
}

LatentPlane decode_hyper(std::span<const std::uint8_t> bytes, const std::vector<DiscretePmf>& pmfs, int channels,
                         int height, int width) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  return decode_plane(
      bytes, [&](std::size_t i, const LatentPlane&) { return pmfs[i / plane]; }, LatentPlane(channels, height, width));
}

namespace {

PmfProvider elementwise_pmfs(const Tensor<float>& mu, const Tensor<float>& log_scale) {
  return [&mu, &log_scale](std::size_t i, const LatentPlane&) { return discretize_laplacian(mu[i], log_scale[i]); };
}

}  // namespace

IFrameResult compress_iframe(const Tensor<float>& frame, RateIndex rate, const AutoencoderWeights<float>& w) {
  IFrameResult out;
  out.latent = quantize_round(analyze_frame(frame, rate, w));
  const IEntropyParams p = i_entropy_params(out.latent, w);
  out.chunk.type = FrameType::kIntra;
  out.chunk.z_stream = encode_hyper(p.z_hat, z_prior_pmfs(w.z_mu.value(), w.z_log_scale.value())).bytes;
  out.chunk.y_stream = encode_plane(out.latent, elementwise_pmfs(p.mu, p.log_scale)).bytes;
  const Var<float> y = Var<float>::constant(to_tensor<float>(out.latent));
  const double y_bits = sum(laplace_bits(y, Var<float>::constant(p.mu), Var<float>::constant(p.log_scale))).value()[0];
  out.estimated_bits = y_bits + p.z_bits;
  return out;
}

LatentPlane decode_iframe_latent(const FrameChunk& chunk, int height, int width, const AutoencoderWeights<float>& w) {
  if (chunk.type != FrameType::kIntra) throw CorruptStreamError("expected an intra chunk");
  const int h = latent_extent(height, w.config), wd = latent_extent(width, w.config);
  const LatentPlane z_hat = decode_hyper(chunk.z_stream, z_prior_pmfs(w.z_mu.value(), w.z_log_scale.value()),
                                         w.config.hyper_channels, hyper_extent(h), hyper_extent(wd));
  const auto p = hyper_synthesis(Var<float>::constant(to_tensor<float>(z_hat)), h, wd, w);
  const Tensor<float> mu = p.mu.value(), ls = p.log_scale.value();
  return decode_plane(chunk.y_stream, elementwise_pmfs(mu, ls), LatentPlane(w.config.latent_channels, h, wd));
}

DecodedFrame decompress_iframe(const FrameChunk& chunk, RateIndex rate, int height, int width,
                               const AutoencoderWeights<float>& w) {
  DecodedFrame out;
  out.latent = decode_iframe_latent(chunk, height, width, w);
  out.frame = synthesize(out.latent, rate, w);
  return out;
}

#define MFVC_INSTANTIATE_IMAGE(T)                                                                          \
  template struct AutoencoderWeights<T>;                                                                   \
  template AutoencoderWeights<T> init_autoencoder<T>(const ImageCodecConfig&, std::uint64_t);             \
  template AutoencoderWeights<T> autoencoder_from_file<T>(const WeightsFile&);                             \
  template Var<T> analyze<T>(const Var<T>&, std::span<const int>, const AutoencoderWeights<T>&);          \
  template Var<T> synthesize_raw<T>(const Var<T>&, std::span<const int>, const AutoencoderWeights<T>&);   \
  template Var<T> hyper_analysis<T>(const Var<T>&, const AutoencoderWeights<T>&);                         \
  template LaplaceParams<T> hyper_synthesis<T>(const Var<T>&, int, int, const AutoencoderWeights<T>&);    \
  template Var<T> z_prior_bits<T>(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> quantize_like<T>(const Var<T>&, const QuantMode&, std::uint64_t);                       \
  template IFrameForward<T> iframe_forward<T>(const Var<T>&, std::span<const int>, const QuantMode&,      \
                                              const AutoencoderWeights<T>&);

MFVC_INSTANTIATE_IMAGE(float)
MFVC_INSTANTIATE_IMAGE(double)

}  // namespace mfvc
