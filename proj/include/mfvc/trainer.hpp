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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfvc/image_codec.hpp"
#include "mfvc/params.hpp"
#include "mfvc/stem.hpp"

namespace mfvc {

enum class Distortion { kMse, kMsSsim };
Distortion parse_distortion(const std::string& name);
std::string distortion_name(Distortion d);

struct TrainConfig {
  std::vector<double> lambda_set{64.0, 256.0, 1024.0};
  int batch_size = 8;
  int patch_h = 64;
  int patch_w = 64;
  std::vector<double> lr_values{1e-3, 3e-4, 1e-4};
  // Either one boundary per value (the last one marks the end of the final
  // stage) or one fewer.
  std::vector<int> lr_boundaries{6000, 9000};
  int total_iters = 10000;
  Distortion distortion = Distortion::kMse;
  std::uint64_t seed = 1;

  std::string log_path;         // CSV, one row per iteration; empty for none
  std::string checkpoint_path;  // weights file rewritten every checkpoint_every
  int checkpoint_every = 0;

  void validate(int factor) const;
};

double lr_at(int iteration, const TrainConfig& cfg);

// Bias-corrected Adam. Tensors whose gradient holds a non-finite value are
// left untouched for that step and counted.
template <typename T>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the gradients in `params` and clears them.
  // Returns the number of tensors skipped.
  int step(const std::vector<ParamRef<T>>& params, double lr);

  long steps() const { return steps_; }
  long skipped() const { return skipped_; }

 private:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };
  double beta1_, beta2_, eps_;
  long steps_ = 0;
  long skipped_ = 0;
  std::vector<Moments> moments_;
};

template <typename T>
struct ImageLoss {
  Var<T> loss;        // mean over the batch of R + lambda * D
  double rate = 0;    // bits per pixel, batch mean
  double distortion = 0;  // MSE in [0, 1] units or 1 - MS-SSIM, batch mean
};
// Each item uses the lambda of its own rate index.
template <typename T>
ImageLoss<T> loss_i(const Var<T>& frames, std::span<const int> rates, const QuantMode& mode, Distortion distortion,
                    const AutoencoderWeights<T>& w);

// (y bits + z bits) per coded latent symbol. No distortion term: the
// entropy model never changes the reconstruction.
template <typename T>
Var<T> loss_p(const Var<T>& y_t, const Var<T>& y_prev, const StemFlags& flags, const QuantMode& mode,
              const StemWeights<T>& w);

struct TrainLogRow {
  int iteration = 0;
  double lr = 0;
  double loss = 0;
  double rate = 0;
  double distortion = 0;
};

struct TrainReport {
  std::vector<TrainLogRow> log;
  long skipped_updates = 0;
};

// Called after each iteration; handy for progress output.
using TrainProgress = std::function<void(const TrainLogRow&)>;

// Frames are (1, 3, H, W) with H, W at least the patch size. Patches are
// random crops with random horizontal flips; each item draws its own rate.
AutoencoderWeights<float> train_image_model(const std::vector<Tensor<float>>& frames, const ImageCodecConfig& model,
                                            const TrainConfig& cfg, TrainReport* report = nullptr,
                                            const TrainProgress& progress = {});

// Each clip is a frame sequence; pairs are (first frame, one of the next six).
// Latents come from the frozen auto-encoder at one random rate per batch.
StemWeights<float> train_stem(const std::vector<std::vector<Tensor<float>>>& clips,
                              const AutoencoderWeights<float>& frozen, const StemConfig& model, const TrainConfig& cfg,
                              const StemFlags& flags, TrainReport* report = nullptr,
                              const TrainProgress& progress = {});

}  // namespace mfvc
