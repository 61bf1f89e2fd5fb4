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

#include <cmath>
#include <string>

#include "mfvc/ops.hpp"

namespace mfvc {
namespace {

struct ConvGeometry {
  int channels;
  int height;
  int width;
  int k;
  int stride;
  int pad;
  int out_h;
  int out_w;

  int out_plane() const { return out_h * out_w; }
  int col_rows() const { return channels * k * k; }
};

ConvGeometry geometry(int channels, int height, int width, int k, int stride) {
  return {channels, height, width, k, stride, (k - 1) / 2, (height + stride - 1) / stride,
          (width + stride - 1) / stride};
}

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const int out_plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const int out_plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = img + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          const T* src = row + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_layer(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
void check_common(const Var<T>& x, const ConvLayer<T>& layer, const char* op) {
  const Shape& ks = layer.kernel.shape();
  check_layer(ks.h == ks.w, std::string(op) + ": kernel must be square, got " + ks.str());
  check_layer(layer.stride >= 1, std::string(op) + ": stride must be positive");
  check_layer(layer.stride != 1 || ks.h % 2 == 1,
              std::string(op) + ": stride-1 kernels must have odd extent, got " + ks.str());
  check_layer(x.shape().c == layer.in_channels(),
              std::string(op) + ": input channel dimension " + std::to_string(x.shape().c) +
                  " does not match layer in_ch " + std::to_string(layer.in_channels()));
  check_layer(layer.bias.shape().c == layer.out_channels() && layer.bias.value().size() ==
                                                                  static_cast<std::size_t>(
                                                                      layer.out_channels()),
              std::string(op) + ": bias must have one value per output channel");
}

template <typename T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias) {
  for (int n = 0; n < out.batch(); ++n) {
    auto img = out.image(n);
    for (int c = 0; c < out.channels(); ++c) img.row(c).array() += bias[c];
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& gy, Tensor<T>& db) {
  for (int n = 0; n < gy.batch(); ++n) {
    auto img = gy.image(n);
    for (int c = 0; c < gy.channels(); ++c) db[c] += img.row(c).sum();
  }
}

// Forward/backward of a regular conv with an explicit (possibly masked) kernel.
template <typename T>
Var<T> conv_with_kernel(const Var<T>& x, const Var<T>& kernel_var, const Tensor<T>& kernel,
                        const Var<T>& bias, int stride, std::optional<Tensor<T>> mask) {
  const Shape xs = x.shape();
  const int cout = kernel.shape().n;
  const int k = kernel.shape().h;
  const ConvGeometry g = geometry(xs.c, xs.h, xs.w, k, stride);
  Tensor<T> out(Shape{xs.n, cout, g.out_h, g.out_w});
  Eigen::Map<const RowMatrix<T>> kmat(kernel.data(), cout, g.col_rows());
  const bool pointwise = k == 1 && stride == 1;

  RowMatrix<T> cols(pointwise ? 0 : g.col_rows(), pointwise ? 0 : g.out_plane());
  for (int n = 0; n < xs.n; ++n) {
    if (pointwise) {
      out.image(n).noalias() = kmat * x.value().image(n);
    } else {
      im2col(x.value().data() + static_cast<std::size_t>(n) * xs.c * xs.h * xs.w, g,
             cols.data());
      out.image(n).noalias() = kmat * cols;
    }
  }
  add_bias(out, bias.value());

  return Var<T>::from_op(
      std::move(out), {x, kernel_var, bias},
      [g, kernel, mask = std::move(mask), pointwise](typename Var<T>::Node& self) {
        auto* xn = self.parents[0].get();
        auto* kn = self.parents[1].get();
        auto* bn = self.parents[2].get();
        const Tensor<T>& gy = self.grad;
        const int cout = kernel.shape().n;
        Eigen::Map<const RowMatrix<T>> kmat(kernel.data(), cout, g.col_rows());
        RowMatrix<T> cols(g.col_rows(), g.out_plane());
        RowMatrix<T> dcols;
        RowMatrix<T> dk = RowMatrix<T>::Zero(cout, g.col_rows());
        const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
        for (int n = 0; n < gy.batch(); ++n) {
          auto gn = gy.image(n);
          if (kn->requires_grad) {
            if (pointwise) {
              dk.noalias() += gn * xn->value.image(n).transpose();
            } else {
              im2col(xn->value.data() + n * in_stride, g, cols.data());
              dk.noalias() += gn * cols.transpose();
            }
          }
          if (xn->requires_grad) {
            auto& dx = xn->grad_buffer();
            if (pointwise) {
              dx.image(n).noalias() += kmat.transpose() * gn;
            } else {
              dcols.noalias() = kmat.transpose() * gn;
              col2im(dcols.data(), g, dx.data() + n * in_stride);
            }
          }
        }
        if (kn->requires_grad) {
          auto& dkt = kn->grad_buffer();
          Eigen::Map<RowMatrix<T>> dkm(dkt.data(), cout, g.col_rows());
          if (mask) {
            const int kk = g.k * g.k;
            for (int o = 0; o < cout; ++o) {
              for (int j = 0; j < g.col_rows(); ++j) dk(o, j) *= (*mask)[j % kk];
            }
          }
          dkm += dk;
        }
        if (bn->requires_grad) accumulate_bias_grad(gy, bn->grad_buffer());
      });
}

template <typename T>
Tensor<T> he_normal(Shape shape, double fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

template <typename T>
Tensor<T> causal_mask(int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("causal mask needs an odd kernel size, got " + std::to_string(kernel_size));
  }
  Tensor<T> mask(Shape{1, 1, kernel_size, kernel_size});
  const int center = kernel_size / 2;
  for (int r = 0; r < kernel_size; ++r) {
    for (int c = 0; c < kernel_size; ++c) {
      mask(0, 0, r, c) = (r < center || (r == center && c < center)) ? T(1) : T(0);
    }
  }
  return mask;
}

template <typename T>
ConvLayer<T> make_conv(int in, int out, int kernel_size, int stride, std::mt19937_64& rng) {
  ConvLayer<T> layer;
  layer.kernel = Var<T>::parameter(
      he_normal<T>(Shape{out, in, kernel_size, kernel_size}, in * kernel_size * kernel_size, rng));
  layer.bias = Var<T>::parameter(Tensor<T>(Shape{1, out, 1, 1}));
  layer.stride = stride;
  return layer;
}

template <typename T>
ConvLayer<T> make_transpose_conv(int in, int out, int kernel_size, int stride,
                                 std::mt19937_64& rng) {
  ConvLayer<T> layer;
  const double fan_in = static_cast<double>(in) * kernel_size * kernel_size / (stride * stride);
  layer.kernel =
      Var<T>::parameter(he_normal<T>(Shape{in, out, kernel_size, kernel_size}, fan_in, rng));
  layer.bias = Var<T>::parameter(Tensor<T>(Shape{1, out, 1, 1}));
  layer.stride = stride;
  layer.transpose = true;
  return layer;
}

template <typename T>
ConvLayer<T> make_masked_conv(int in, int out, int kernel_size, std::mt19937_64& rng) {
  const Tensor<T> mask = causal_mask<T>(kernel_size);
  const double live = mask.flat().sum();
  ConvLayer<T> layer;
  layer.kernel = Var<T>::parameter(
      he_normal<T>(Shape{out, in, kernel_size, kernel_size}, in * live, rng));
  layer.bias = Var<T>::parameter(Tensor<T>(Shape{1, out, 1, 1}));
  layer.mask = mask;
  return layer;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvLayer<T>& layer) {
  if (layer.transpose) throw ConfigError("conv2d: layer is a transpose layer");
  check_common(x, layer, "conv2d");
  if (layer.mask) return masked_conv2d(x, layer);
  return conv_with_kernel<T>(x, layer.kernel, layer.kernel.value(), layer.bias, layer.stride,
                             std::nullopt);
}

template <typename T>
Var<T> masked_conv2d(const Var<T>& x, const ConvLayer<T>& layer) {
  if (!layer.mask) throw ConfigError("masked_conv2d: layer has no mask");
  if (layer.stride != 1) throw ConfigError("masked_conv2d: stride must be 1");
  check_common(x, layer, "masked_conv2d");
  const Tensor<T>& mask = *layer.mask;
  const int k = layer.kernel_size();
  if (!(mask.shape() == Shape{1, 1, k, k})) {
    throw ConfigError("masked_conv2d: mask extents " + mask.shape().str() +
                      " do not match kernel " + layer.kernel.shape().str());
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != T(0) && mask[i] != T(1)) throw ConfigError("masked_conv2d: mask is not binary");
  }
  Tensor<T> effective = layer.kernel.value();
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  for (std::size_t i = 0; i < effective.size(); ++i) effective[i] *= mask[i % kk];
  return conv_with_kernel<T>(x, layer.kernel, effective, layer.bias, 1, mask);
}

template <typename T>
Var<T> transpose_conv2d(const Var<T>& x, const ConvLayer<T>& layer) {
  if (!layer.transpose) throw ConfigError("transpose_conv2d: layer is not a transpose layer");
  check_common(x, layer, "transpose_conv2d");
  const Shape xs = x.shape();
  const Tensor<T>& kernel = layer.kernel.value();
  const int cin = kernel.shape().n;
  const int cout = kernel.shape().c;
  const int s = layer.stride;
  // Geometry of the adjoint conv: it maps the output image to x.
  const ConvGeometry g = geometry(cout, xs.h * s, xs.w * s, layer.kernel_size(), s);
  Tensor<T> out(Shape{xs.n, cout, g.height, g.width});
  Eigen::Map<const RowMatrix<T>> kmat(kernel.data(), cin, g.col_rows());
  RowMatrix<T> cols(g.col_rows(), g.out_plane());
  const std::size_t out_stride = static_cast<std::size_t>(cout) * g.height * g.width;
  for (int n = 0; n < xs.n; ++n) {
    cols.noalias() = kmat.transpose() * x.value().image(n);
    col2im(cols.data(), g, out.data() + n * out_stride);
  }
  add_bias(out, layer.bias.value());

  return Var<T>::from_op(
      std::move(out), {x, layer.kernel, layer.bias},
      [g, cin, out_stride](typename Var<T>::Node& self) {
        auto* xn = self.parents[0].get();
        auto* kn = self.parents[1].get();
        auto* bn = self.parents[2].get();
        const Tensor<T>& gy = self.grad;
        Eigen::Map<const RowMatrix<T>> kmat(kn->value.data(), cin, g.col_rows());
        RowMatrix<T> cols(g.col_rows(), g.out_plane());
        RowMatrix<T> dk = RowMatrix<T>::Zero(cin, g.col_rows());
        for (int n = 0; n < gy.batch(); ++n) {
          im2col(gy.data() + n * out_stride, g, cols.data());
          if (xn->requires_grad) xn->grad_buffer().image(n).noalias() += kmat * cols;
          if (kn->requires_grad) dk.noalias() += xn->value.image(n) * cols.transpose();
        }
        if (kn->requires_grad) {
          Eigen::Map<RowMatrix<T>> dkm(kn->grad_buffer().data(), cin, g.col_rows());
          dkm += dk;
        }
        if (bn->requires_grad) accumulate_bias_grad(gy, bn->grad_buffer());
      });
}

template <typename T>
Var<T> apply(const ConvLayer<T>& layer, const Var<T>& x) {
  if (layer.transpose) return transpose_conv2d(x, layer);
  if (layer.mask) return masked_conv2d(x, layer);
  return conv2d(x, layer);
}

#define MFVC_INSTANTIATE_CONV(T)                                                          \
  template Tensor<T> causal_mask<T>(int);                                                 \
  template ConvLayer<T> make_conv<T>(int, int, int, int, std::mt19937_64&);               \
  template ConvLayer<T> make_transpose_conv<T>(int, int, int, int, std::mt19937_64&);     \
  template ConvLayer<T> make_masked_conv<T>(int, int, int, std::mt19937_64&);             \
  template Var<T> conv2d<T>(const Var<T>&, const ConvLayer<T>&);                          \
  template Var<T> masked_conv2d<T>(const Var<T>&, const ConvLayer<T>&);                   \
  template Var<T> transpose_conv2d<T>(const Var<T>&, const ConvLayer<T>&);                \
  template Var<T> apply<T>(const ConvLayer<T>&, const Var<T>&);

MFVC_INSTANTIATE_CONV(float)
MFVC_INSTANTIATE_CONV(double)

}  // namespace mfvc
