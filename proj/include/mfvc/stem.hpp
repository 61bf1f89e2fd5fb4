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
#include <string>
#include <vector>

#include "mfvc/chunk.hpp"
#include "mfvc/entropy.hpp"
#include "mfvc/image_codec.hpp"
#include "mfvc/ops.hpp"
#include "mfvc/params.hpp"

namespace mfvc {

// Layer widths of the spatiotemporal entropy model. scaled() applies the
// C/320 factor to the reference widths.
struct StemConfig {
  int latent_channels = 32;
  int hyper_channels = 26;                  // P-HE convs and P-HD deconvs
  std::vector<int> tpm_channels{43, 53, 64};
  int spm_channels = 64;
  std::vector<int> epm_channels{160, 128};  // hidden 1x1 widths; output is 2C
  double slope = kDefaultLeakySlope;

  static StemConfig scaled(int latent_channels);
  int phd_channels() const { return 2 * latent_channels; }
  int fused_channels() const { return phd_channels() + spm_channels + tpm_channels.back(); }
  void validate() const;
};

struct StemFlags {
  bool use_spm = true;
  bool use_tpm = true;
  bool use_residual = true;

  std::uint8_t bits() const;
  static StemFlags from_bits(std::uint8_t bits);
  std::string name() const;
  bool operator==(const StemFlags&) const = default;
};

template <typename T>
struct StemWeights {
  StemConfig config;
  std::vector<ConvLayer<T>> phe;
  std::vector<ConvLayer<T>> phd;
  std::vector<ConvLayer<T>> tpm;
  ConvLayer<T> spm;
  std::vector<ConvLayer<T>> epm;
  Var<T> z_mu;         // (1, hyper, 1, 1)
  Var<T> z_log_scale;  // (1, hyper, 1, 1)

  std::vector<ParamRef<T>> params();
  void set_trainable(bool trainable) { mfvc::set_trainable(params(), trainable); }
  // `flags` is recorded for reference; coding uses the container's flags.
  WeightsFile to_file(const StemFlags& flags = {}) const;
};

template <typename T>
StemWeights<T> init_stem(const StemConfig& cfg, std::uint64_t seed);
template <typename T>
StemWeights<T> stem_from_file(const WeightsFile& file);
StemWeights<float> load_stem(const std::string& path);
StemFlags stem_trained_flags(const WeightsFile& file);

LatentPlane residual_latent(const LatentPlane& y_t, const LatentPlane& y_prev);
LatentPlane reconstruct_latent(const LatentPlane& res, const LatentPlane& y_prev);

// ---------------------------------------------------------------------------
// Batched, differentiable path (training and rate estimation). Latent
// inputs are float-valued integer tensors (B, C, h, w).

template <typename T>
Var<T> phe_forward(const Var<T>& y_t, const Var<T>& y_prev, const StemWeights<T>& w);
template <typename T>
Var<T> phd_forward(const Var<T>& z_hat, int height, int width, const StemWeights<T>& w);
template <typename T>
Var<T> tpm_forward(const Var<T>& y_prev, const StemWeights<T>& w);
template <typename T>
Var<T> spm_forward(const Var<T>& context, const StemWeights<T>& w);
template <typename T>
LaplaceParams<T> epm_forward(const Var<T>& phd_out, const Var<T>& spm_out, const Var<T>& tpm_out,
                             const StemFlags& flags, const StemWeights<T>& w);

template <typename T>
struct StemForward {
  Var<T> coded;   // residual, or y_t without residual coding
  Var<T> mu;
  Var<T> log_scale;
  Var<T> y_bits;  // elementwise
  Var<T> z_bits;  // elementwise
};
template <typename T>
StemForward<T> stem_forward(const Var<T>& y_t, const Var<T>& y_prev, const StemFlags& flags, const QuantMode& mode,
                            const StemWeights<T>& w);

// ---------------------------------------------------------------------------
// Single-frame inference.

struct HyperResult {
  LatentPlane z_hat;
  double z_bits = 0;
};
HyperResult hyper_encode(const LatentPlane& y_t, const LatentPlane& y_prev, const StemWeights<float>& w);
Tensor<float> temporal_prior(const LatentPlane& y_prev, const StemWeights<float>& w);
Tensor<float> spatial_prior(const LatentPlane& context, const StemWeights<float>& w);
struct EntropyParams {
  Tensor<float> mu;
  Tensor<float> log_scale;
};
EntropyParams entropy_params(const Tensor<float>& phd_out, const Tensor<float>& spm_out, const Tensor<float>& tpm_out,
                             const StemFlags& flags, const StemWeights<float>& w);

struct PFrameRate {
  double y_bits = 0;
  double z_bits = 0;
  Tensor<float> symbol_bits;  // (1, C, h, w)
};
// Eval-mode estimate (rounding, batched SPM on the known plane).
PFrameRate p_frame_rate(const LatentPlane& y_t, const LatentPlane& y_prev, const StemFlags& flags,
                        const StemWeights<float>& w);

// P-frame planes are scanned position-major: SPM mixes every channel of the
// earlier positions, so all channels of a position are coded together.
inline constexpr ScanOrder kPFrameScan = ScanOrder::kPositionMajor;

FrameChunk encode_pframe(const LatentPlane& y_t, const LatentPlane& y_prev, const StemFlags& flags,
                         const StemWeights<float>& w);
LatentPlane decode_pframe(const FrameChunk& chunk, const LatentPlane& y_prev, const StemFlags& flags,
                          const StemWeights<float>& w);

}  // namespace mfvc
