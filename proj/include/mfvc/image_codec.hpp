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

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mfvc/chunk.hpp"
#include "mfvc/entropy.hpp"
#include "mfvc/ops.hpp"
#include "mfvc/params.hpp"
#include "mfvc/weights.hpp"

namespace mfvc {

struct ImageCodecConfig {
  int latent_channels = 32;
  int hidden_channels = 48;
  int hyper_channels = 24;
  int stages = 2;  // stride-2 analysis convs; downsampling factor is 2^stages
  double slope = kDefaultLeakySlope;
  std::vector<double> lambdas{64.0, 256.0, 1024.0};

  int factor() const { return 1 << stages; }
  int rates() const { return static_cast<int>(lambdas.size()); }
  void validate() const;
};

struct RateIndex {
  int index = 0;
  double lambda = 0;
};
RateIndex rate_index(const ImageCodecConfig& cfg, int index);

// Per-lambda channel-wise (scale preimage, bias), each (rates, C, 1, 1).
template <typename T>
struct RateTable {
  Var<T> scale;
  Var<T> bias;
};

template <typename T>
struct AutoencoderWeights {
  ImageCodecConfig config;
  std::vector<ConvLayer<T>> analysis;
  std::vector<RateTable<T>> analysis_rate;  // one per analysis layer
  std::vector<ConvLayer<T>> synthesis;
  std::vector<RateTable<T>> synthesis_rate;  // one per synthesis layer except the last
  std::vector<ConvLayer<T>> hyper_enc;
  std::vector<ConvLayer<T>> hyper_dec;
  Var<T> z_mu;         // (1, H, 1, 1)
  Var<T> z_log_scale;  // (1, H, 1, 1)

  std::vector<ParamRef<T>> params();
  void set_trainable(bool trainable) { mfvc::set_trainable(params(), trainable); }
  WeightsFile to_file() const;
};

template <typename T>
AutoencoderWeights<T> init_autoencoder(const ImageCodecConfig& cfg, std::uint64_t seed);
template <typename T>
AutoencoderWeights<T> autoencoder_from_file(const WeightsFile& file);
// Returned weights are frozen (no gradient recording).
AutoencoderWeights<float> load_autoencoder(const std::string& path);

template <typename U, typename T>
AutoencoderWeights<U> cast_weights(const AutoencoderWeights<T>& w) {
  AutoencoderWeights<U> out = autoencoder_from_file<U>(w.to_file());
  return out;
}

// ---------------------------------------------------------------------------
// Batched, differentiable building blocks. `rates` holds one index per item.

template <typename T>
Var<T> analyze(const Var<T>& frames, std::span<const int> rates, const AutoencoderWeights<T>& w);
// Synthesis without the output clamp (training path).
template <typename T>
Var<T> synthesize_raw(const Var<T>& latent, std::span<const int> rates, const AutoencoderWeights<T>& w);
template <typename T>
Var<T> hyper_analysis(const Var<T>& latent, const AutoencoderWeights<T>& w);

template <typename T>
struct LaplaceParams {
  Var<T> mu;
  Var<T> log_scale;  // clamped to the coder's range
};
// Hyper synthesis cropped to the latent extents (height, width).
template <typename T>
LaplaceParams<T> hyper_synthesis(const Var<T>& z_hat, int height, int width, const AutoencoderWeights<T>& w);
// Elementwise bits of z under the channel-wise prior.
template <typename T>
Var<T> z_prior_bits(const Var<T>& z_hat, const Var<T>& mu, const Var<T>& log_scale);

// Noise surrogate in training mode (seeded), rounding in evaluation mode.
struct QuantMode {
  bool training = false;
  std::uint64_t seed = 0;
};
template <typename T>
Var<T> quantize_like(const Var<T>& x, const QuantMode& mode, std::uint64_t stream);

template <typename T>
struct IFrameForward {
  Var<T> latent;  // y after quantization surrogate
  Var<T> recon;   // unclamped reconstruction
  Var<T> y_bits;  // elementwise
  Var<T> z_bits;  // elementwise
};
template <typename T>
IFrameForward<T> iframe_forward(const Var<T>& frames, std::span<const int> rates, const QuantMode& mode,
                                const AutoencoderWeights<T>& w);

// ---------------------------------------------------------------------------
// Inference on single frames (batch 1, float).

// Frame is (1, 3, H, W) in [0, 1] with H and W divisible by the factor.
Tensor<float> analyze_frame(const Tensor<float>& frame, RateIndex rate, const AutoencoderWeights<float>& w);
Tensor<float> synthesize(const LatentPlane& latent, RateIndex rate, const AutoencoderWeights<float>& w);

struct IEntropyParams {
  Tensor<float> mu;
  Tensor<float> log_scale;
  LatentPlane z_hat;
  double z_bits = 0;
};
IEntropyParams i_entropy_params(const LatentPlane& latent, const AutoencoderWeights<float>& w);

// Per-channel PMFs of the hyper latent.
std::vector<DiscretePmf> z_prior_pmfs(const Tensor<float>& mu, const Tensor<float>& log_scale);
CodedStream encode_hyper(const LatentPlane& z_hat, const std::vector<DiscretePmf>& pmfs);
LatentPlane decode_hyper(std::span<const std::uint8_t> bytes, const std::vector<DiscretePmf>& pmfs,
                         int channels, int height, int width);

struct IFrameResult {
  FrameChunk chunk;
  LatentPlane latent;
  double estimated_bits = 0;  // eval-mode y + z bits
};
IFrameResult compress_iframe(const Tensor<float>& frame, RateIndex rate, const AutoencoderWeights<float>& w);

struct DecodedFrame {
  Tensor<float> frame;
  LatentPlane latent;
};
// (height, width) are the padded frame extents.
LatentPlane decode_iframe_latent(const FrameChunk& chunk, int height, int width,
                                 const AutoencoderWeights<float>& w);
DecodedFrame decompress_iframe(const FrameChunk& chunk, RateIndex rate, int height, int width,
                               const AutoencoderWeights<float>& w);

// Extents of the latent/hyper latent for a padded frame size.
int latent_extent(int pixels, const ImageCodecConfig& cfg);
int hyper_extent(int latent);

}  // namespace mfvc
