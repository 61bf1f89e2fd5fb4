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
#include <random>
#include <span>
#include <vector>

#include "mfvc/autograd.hpp"
#include "mfvc/tensor.hpp"

namespace mfvc {

inline constexpr double kDefaultLeakySlope = 0.2;

// Convolution with zero "same" padding of (k - 1) / 2.
//
// Regular and masked layers store the kernel as (out, in, k, k). Transpose
// layers store it as (in, out, k, k): the same tensor a regular conv would
// use in the opposite direction, so transpose_conv2d is exactly its adjoint.
template <typename T>
struct ConvLayer {
  Var<T> kernel;
  Var<T> bias;  // (1, out, 1, 1)
  int stride = 1;
  bool transpose = false;
  std::optional<Tensor<T>> mask;  // (1, 1, k, k), binary

  int kernel_size() const { return kernel.shape().h; }
  int in_channels() const { return transpose ? kernel.shape().n : kernel.shape().c; }
  int out_channels() const { return transpose ? kernel.shape().c : kernel.shape().n; }

  template <typename U>
  ConvLayer<U> cast() const {
    ConvLayer<U> out;
    out.kernel = Var<U>::parameter(kernel.value().template cast<U>());
    out.bias = Var<U>::parameter(bias.value().template cast<U>());
    out.stride = stride;
    out.transpose = transpose;
    if (mask) out.mask = mask->template cast<U>();
    return out;
  }
};

// Type-A raster mask: ones strictly before the center in raster order.
template <typename T>
Tensor<T> causal_mask(int kernel_size);

template <typename T>
ConvLayer<T> make_conv(int in, int out, int kernel_size, int stride, std::mt19937_64& rng);
template <typename T>
ConvLayer<T> make_transpose_conv(int in, int out, int kernel_size, int stride,
                                 std::mt19937_64& rng);
template <typename T>
ConvLayer<T> make_masked_conv(int in, int out, int kernel_size, std::mt19937_64& rng);

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvLayer<T>& layer);
template <typename T>
Var<T> transpose_conv2d(const Var<T>& x, const ConvLayer<T>& layer);
template <typename T>
Var<T> masked_conv2d(const Var<T>& x, const ConvLayer<T>& layer);
// Dispatches on the layer kind.
template <typename T>
Var<T> apply(const ConvLayer<T>& layer, const Var<T>& x);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope = kDefaultLeakySlope);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count);
template <typename T>
Var<T> slice_batch(const Var<T>& x, int index);
// Top-left crop to (height, width).
template <typename T>
Var<T> crop_spatial(const Var<T>& x, int height, int width);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> add_scalar(const Var<T>& a, double c);
template <typename T>
Var<T> scale(const Var<T>& a, double c);
// a^p for a > 0.
template <typename T>
Var<T> pow_scalar(const Var<T>& a, double p);
// Gradient is zero where the input lies outside [lo, hi].
template <typename T>
Var<T> clamp(const Var<T>& a, double lo, double hi);
template <typename T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c);

// Reductions accumulate in double.
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

// Channel-wise softplus(scale[r, c]) * x + bias[r, c], where r is the rate
// index of each batch item. Tables are (rates, channels, 1, 1).
template <typename T>
Var<T> conditional_scale(const Var<T>& x, const Var<T>& scale_table, const Var<T>& bias_table,
                         std::span<const int> rate_per_item);

// Broadcast a (1, C, 1, 1) parameter to a full shape.
template <typename T>
Var<T> broadcast_channels(const Var<T>& p, const Shape& shape);

// x + u with u ~ U[-1/2, 1/2) i.i.d., deterministic in seed. Gradient passes
// straight through.
template <typename T>
Var<T> add_uniform_noise(const Var<T>& x, std::uint64_t seed);

// Per-element -log2 of the Laplacian mass on [y - 1/2, y + 1/2]. The value
// is floored at 2^-16 probability (16 bits) to mirror the coder's frequency
// floor; the gradient is taken from the unfloored likelihood.
template <typename T>
Var<T> laplace_bits(const Var<T>& y, const Var<T>& mu, const Var<T>& log_scale);

// Per-channel 2-D filtering with the outer product of a 1-D kernel, no padding.
template <typename T>
Var<T> gaussian_blur_valid(const Var<T>& x, std::span<const double> kernel1d);
// 2x2 mean pooling (odd trailing rows/columns dropped).
template <typename T>
Var<T> avg_pool2(const Var<T>& x);

// Round half away from zero.
template <typename T>
Tensor<T> round_tensor(const Tensor<T>& x);
// Single-item tensor to an integer plane; throws on non-finite values.
template <typename T>
LatentPlane quantize_round(const Tensor<T>& x);

}  // namespace mfvc
