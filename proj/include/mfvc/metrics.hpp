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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfvc/chunk.hpp"
#include "mfvc/ops.hpp"

namespace mfvc {

// Frames are (1, 3, H, W) in [0, 1]; quality is measured on the 8-bit scale.
inline constexpr double kPsnrCap = 99.0;
double psnr(const Tensor<float>& a, const Tensor<float>& b);
double mse_8bit(const Tensor<float>& a, const Tensor<float>& b);

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Smallest frame side that supports `scales` levels.
int ms_ssim_min_size(int scales);
// Most levels (at most 5) a frame of this size supports; 0 if none.
int ms_ssim_max_scales(int height, int width);

// Differentiable MS-SSIM of a (1, C, H, W) pair with data range 1, averaged
// over channels. With fewer than 5 scales the leading weights are
// renormalized to sum to one. Per-scale terms are floored at 1e-6 so the
// fractional powers stay defined.
template <typename T>
Var<T> ms_ssim(const Var<T>& a, const Var<T>& b, int scales = 5);
double ms_ssim(const Tensor<float>& a, const Tensor<float>& b, int scales = 5);

double bpp(std::uint64_t stream_bits, int width, int height, int frames);

struct RdPoint {
  double bpp = 0;
  double quality = 0;
};
// Average rate difference of `test` against `anchor` in percent at equal
// quality: monotone piecewise-cubic fits of ln(bpp) over quality, integrated
// exactly over the overlapping quality range.
double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test);

// Per-pixel bits: channel-summed symbol bits spread over each latent
// position's factor x factor footprint.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> bits;  // row-major

  double at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  double total() const;
};
Heatmap entropy_heatmap(const Tensor<float>& symbol_bits, int factor);
void write_heatmap_csv(const std::string& path, const Heatmap& map);
// 8-bit grayscale normalized to the map maximum.
void write_heatmap_pgm(const std::string& path, const Heatmap& map);

struct FrameEval {
  int index = 0;
  FrameType type = FrameType::kIntra;
  std::uint64_t bits = 0;
  double bpp = 0;
  double psnr = 0;
  double ms_ssim = 0;
};
std::string eval_csv(const std::vector<FrameEval>& rows);

}  // namespace mfvc
