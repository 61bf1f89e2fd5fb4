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
#include <limits>
#include <random>
#include <string>

#include "mfvc/laplace.hpp"
#include "mfvc/ops.hpp"

namespace mfvc {
namespace {

template <typename T>
using Node = typename Var<T>::Node;

template <typename T>
Tensor<T> zeros_like(const Var<T>& v) {
  return Tensor<T>(v.shape());
}

double softplus(double s) { return s > 30 ? s : std::log1p(std::exp(s)); }
double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

}  // namespace

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu slope must lie in (0, 1), got " + std::to_string(slope));
  }
  Tensor<T> out(x.shape());
  const T s = static_cast<T>(slope);
  const Tensor<T>& in = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= T(0) ? in[i] : s * in[i];
  return Var<T>::from_op(std::move(out), {x}, [s](Node<T>& self) {
    auto* xn = self.parents[0].get();
    auto& dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += xn->value[i] >= T(0) ? self.grad[i] : s * self.grad[i];
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sb.c == 0 && sb.n == sa.n) return a;
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    out.image(n).topRows(sa.c) = a.value().image(n);
    out.image(n).bottomRows(sb.c) = b.value().image(n);
  }
  const int ca = sa.c;
  const int cb = sb.c;
  return Var<T>::from_op(std::move(out), {a, b}, [ca, cb](Node<T>& self) {
    auto* an = self.parents[0].get();
    auto* bn = self.parents[1].get();
    for (int n = 0; n < self.grad.batch(); ++n) {
      if (an->requires_grad) an->grad_buffer().image(n) += self.grad.image(n).topRows(ca);
      if (bn->requires_grad) bn->grad_buffer().image(n) += self.grad.image(n).bottomRows(cb);
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside channel dimension " +
                     std::to_string(s.c));
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n) out.image(n) = x.value().image(n).middleRows(begin, count);
  return Var<T>::from_op(std::move(out), {x}, [begin, count](Node<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (int n = 0; n < self.grad.batch(); ++n) {
      dx.image(n).middleRows(begin, count) += self.grad.image(n);
    }
  });
}

template <typename T>
Var<T> slice_batch(const Var<T>& x, int index) {
  const Shape s = x.shape();
  if (index < 0 || index >= s.n) {
    throw ShapeError("slice_batch: index " + std::to_string(index) + " outside batch dimension " +
                     std::to_string(s.n));
  }
  Tensor<T> out(Shape{1, s.c, s.h, s.w});
  out.image(0) = x.value().image(index);
  return Var<T>::from_op(std::move(out), {x}, [index](Node<T>& self) {
    self.parents[0]->grad_buffer().image(index) += self.grad.image(0);
  });
}

template <typename T>
Var<T> crop_spatial(const Var<T>& x, int height, int width) {
  const Shape s = x.shape();
  if (height > s.h || width > s.w || height < 0 || width < 0) {
    throw ShapeError("crop_spatial: cannot crop " + s.str() + " to " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  if (height == s.h && width == s.w) return x;
  Tensor<T> out(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx) out(n, c, y, xx) = x.value()(n, c, y, xx);
  return Var<T>::from_op(std::move(out), {x}, [](Node<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    const Shape o = self.grad.shape();
    for (int n = 0; n < o.n; ++n)
      for (int c = 0; c < o.c; ++c)
        for (int y = 0; y < o.h; ++y)
          for (int xx = 0; xx < o.w; ++xx) dx(n, c, y, xx) += self.grad(n, c, y, xx);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() + b.value().flat();
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    for (int i = 0; i < 2; ++i) {
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer().flat() += self.grad.flat();
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat() - b.value().flat();
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer().flat() += self.grad.flat();
    if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer().flat() -= self.grad.flat();
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat().cwiseProduct(b.value().flat());
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    auto* an = self.parents[0].get();
    auto* bn = self.parents[1].get();
    if (an->requires_grad) an->grad_buffer().flat() += self.grad.flat().cwiseProduct(bn->value.flat());
    if (bn->requires_grad) bn->grad_buffer().flat() += self.grad.flat().cwiseProduct(an->value.flat());
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.shape(), b.shape(), "div");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat().cwiseQuotient(b.value().flat());
  return Var<T>::from_op(std::move(out), {a, b}, [](Node<T>& self) {
    auto* an = self.parents[0].get();
    auto* bn = self.parents[1].get();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T g = self.grad[i];
      const T bv = bn->value[i];
      if (an->requires_grad) an->grad_buffer()[i] += g / bv;
      if (bn->requires_grad) bn->grad_buffer()[i] -= g * an->value[i] / (bv * bv);
    }
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat().array() + static_cast<T>(c);
  return Var<T>::from_op(std::move(out), {a}, [](Node<T>& self) {
    self.parents[0]->grad_buffer().flat() += self.grad.flat();
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double c) {
  Tensor<T> out(a.shape());
  const T s = static_cast<T>(c);
  out.flat() = a.value().flat() * s;
  return Var<T>::from_op(std::move(out), {a}, [s](Node<T>& self) {
    self.parents[0]->grad_buffer().flat() += self.grad.flat() * s;
  });
}

template <typename T>
Var<T> pow_scalar(const Var<T>& a, double p) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(std::pow(static_cast<double>(a.value()[i]), p));
  }
  return Var<T>::from_op(std::move(out), {a}, [p](Node<T>& self) {
    auto* an = self.parents[0].get();
    auto& dx = an->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = an->value[i];
      dx[i] += static_cast<T>(self.grad[i] * p * std::pow(v, p - 1.0));
    }
  });
}

template <typename T>
Var<T> clamp(const Var<T>& a, double lo, double hi) {
  Tensor<T> out(a.shape());
  const T l = static_cast<T>(lo);
  const T h = static_cast<T>(hi);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(h, std::max(l, a.value()[i]));
  return Var<T>::from_op(std::move(out), {a}, [l, h](Node<T>& self) {
    auto* an = self.parents[0].get();
    auto& dx = an->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T v = an->value[i];
      if (v >= l && v <= h) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c) {
  check_same_shape(a.shape(), c.shape(), "mul_const");
  Tensor<T> out(a.shape());
  out.flat() = a.value().flat().cwiseProduct(c.flat());
  return Var<T>::from_op(std::move(out), {a}, [c](Node<T>& self) {
    self.parents[0]->grad_buffer().flat() += self.grad.flat().cwiseProduct(c.flat());
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0;
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  return Var<T>::from_op(std::move(out), {a}, [](Node<T>& self) {
    self.parents[0]->grad_buffer().flat().array() += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

template <typename T>
Var<T> conditional_scale(const Var<T>& x, const Var<T>& scale_table, const Var<T>& bias_table,
                         std::span<const int> rate_per_item) {
  const Shape s = x.shape();
  const Shape ts = scale_table.shape();
  check_same_shape(ts, bias_table.shape(), "conditional_scale tables");
  if (ts.c != s.c || ts.h != 1 || ts.w != 1) {
    throw ShapeError("conditional_scale: table " + ts.str() + " does not match channel dimension " +
                     std::to_string(s.c));
  }
  if (rate_per_item.size() != static_cast<std::size_t>(s.n)) {
    throw ShapeError("conditional_scale: need one rate index per batch item");
  }
  std::vector<int> rates(rate_per_item.begin(), rate_per_item.end());
  for (int r : rates) {
    if (r < 0 || r >= ts.n) {
      throw ConfigError("conditional_scale: rate index " + std::to_string(r) + " outside table of " +
                        std::to_string(ts.n));
    }
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T g = static_cast<T>(softplus(scale_table.value()(rates[n], c, 0, 0)));
      const T b = bias_table.value()(rates[n], c, 0, 0);
      out.image(n).row(c) = x.value().image(n).row(c).array() * g + b;
    }
  }
  return Var<T>::from_op(std::move(out), {x, scale_table, bias_table}, [rates](Node<T>& self) {
    auto* xn = self.parents[0].get();
    auto* sn = self.parents[1].get();
    auto* bn = self.parents[2].get();
    const Shape s = self.grad.shape();
    for (int n = 0; n < s.n; ++n) {
      const int r = rates[n];
      for (int c = 0; c < s.c; ++c) {
        const double pre = sn->value(r, c, 0, 0);
        auto grow = self.grad.image(n).row(c);
        if (xn->requires_grad) {
          xn->grad_buffer().image(n).row(c) += grow * static_cast<T>(softplus(pre));
        }
        if (sn->requires_grad) {
          const double gx = grow.dot(xn->value.image(n).row(c));
          sn->grad_buffer()(r, c, 0, 0) += static_cast<T>(gx * sigmoid(pre));
        }
        if (bn->requires_grad) bn->grad_buffer()(r, c, 0, 0) += grow.sum();
      }
    }
  });
}

template <typename T>
Var<T> broadcast_channels(const Var<T>& p, const Shape& shape) {
  if (p.shape() != Shape{1, shape.c, 1, 1}) {
    throw ShapeError("broadcast_channels: parameter " + p.shape().str() + " cannot broadcast to " +
                     shape.str());
  }
  Tensor<T> out(shape);
  for (int n = 0; n < shape.n; ++n)
    for (int c = 0; c < shape.c; ++c) out.image(n).row(c).setConstant(p.value()[c]);
  return Var<T>::from_op(std::move(out), {p}, [](Node<T>& self) {
    auto& dp = self.parents[0]->grad_buffer();
    for (int n = 0; n < self.grad.batch(); ++n)
      for (int c = 0; c < self.grad.channels(); ++c) dp[c] += self.grad.image(n).row(c).sum();
  });
}

template <typename T>
Var<T> add_uniform_noise(const Var<T>& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x.value()[i] + static_cast<T>(dist(rng));
  }
  return Var<T>::from_op(std::move(out), {x}, [](Node<T>& self) {
    self.parents[0]->grad_buffer().flat() += self.grad.flat();
  });
}

template <typename T>
Var<T> laplace_bits(const Var<T>& y, const Var<T>& mu, const Var<T>& log_scale) {
  check_same_shape(y.shape(), mu.shape(), "laplace_bits");
  check_same_shape(y.shape(), log_scale.shape(), "laplace_bits");
  constexpr double kInvLn2 = 1.4426950408889634;
  constexpr double kMaxBits = 16.0;
  const std::size_t n = y.value().size();
  Tensor<T> out(y.shape());
  // d bits / d value and d bits / d log_scale, kept for the backward pass.
  Tensor<T> d_value(y.shape());
  Tensor<T> d_scale(y.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const LaplaceIntervalLog r =
        laplace_interval_log(y.value()[i], mu.value()[i], log_scale.value()[i]);
    out[i] = static_cast<T>(std::min(kMaxBits, -r.log_p * kInvLn2));
    d_value[i] = static_cast<T>(-r.d_value * kInvLn2);
    d_scale[i] = static_cast<T>(-r.d_log_scale * kInvLn2);
  }
  return Var<T>::from_op(
      std::move(out), {y, mu, log_scale},
      [d_value = std::move(d_value), d_scale = std::move(d_scale)](Node<T>& self) {
        auto* yn = self.parents[0].get();
        auto* mn = self.parents[1].get();
        auto* sn = self.parents[2].get();
        const auto g = self.grad.flat();
        if (yn->requires_grad) yn->grad_buffer().flat() += g.cwiseProduct(d_value.flat());
        if (mn->requires_grad) mn->grad_buffer().flat() -= g.cwiseProduct(d_value.flat());
        if (sn->requires_grad) sn->grad_buffer().flat() += g.cwiseProduct(d_scale.flat());
      });
}

template <typename T>
Var<T> gaussian_blur_valid(const Var<T>& x, std::span<const double> kernel1d) {
  const Shape s = x.shape();
  const int k = static_cast<int>(kernel1d.size());
  if (s.h < k || s.w < k) {
    throw ShapeError("gaussian_blur_valid: input " + s.str() + " smaller than window " +
                     std::to_string(k));
  }
  std::vector<double> taps(kernel1d.begin(), kernel1d.end());
  const Shape os{s.n, s.c, s.h - k + 1, s.w - k + 1};
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) {
          double acc = 0;
          for (int i = 0; i < k; ++i) {
            double row = 0;
            for (int j = 0; j < k; ++j) row += taps[j] * x.value()(n, c, y + i, xx + j);
            acc += taps[i] * row;
          }
          out(n, c, y, xx) = static_cast<T>(acc);
        }
  return Var<T>::from_op(std::move(out), {x}, [taps, k](Node<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    const Shape os = self.grad.shape();
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const double g = self.grad(n, c, y, xx);
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) dx(n, c, y + i, xx + j) += static_cast<T>(g * taps[i] * taps[j]);
          }
  });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx) {
          const auto& v = x.value();
          out(n, c, y, xx) = (v(n, c, 2 * y, 2 * xx) + v(n, c, 2 * y, 2 * xx + 1) +
                              v(n, c, 2 * y + 1, 2 * xx) + v(n, c, 2 * y + 1, 2 * xx + 1)) /
                             T(4);
        }
  return Var<T>::from_op(std::move(out), {x}, [](Node<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    const Shape os = self.grad.shape();
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const T g = self.grad(n, c, y, xx) / T(4);
            dx(n, c, 2 * y, 2 * xx) += g;
            dx(n, c, 2 * y, 2 * xx + 1) += g;
            dx(n, c, 2 * y + 1, 2 * xx) += g;
            dx(n, c, 2 * y + 1, 2 * xx + 1) += g;
          }
  });
}

template <typename T>
Tensor<T> round_tensor(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(static_cast<double>(x[i]))) {
      throw ConfigError("quantize_round: non-finite value at flat index " + std::to_string(i));
    }
    out[i] = std::round(x[i]);  // half away from zero
  }
  return out;
}

template <typename T>
LatentPlane quantize_round(const Tensor<T>& x) {
  if (x.batch() != 1) throw ShapeError("quantize_round expects a single item, got " + x.shape().str());
  const Tensor<T> r = round_tensor(x);
  LatentPlane plane(x.channels(), x.height(), x.width());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double v = r[i];
    if (std::fabs(v) > std::numeric_limits<std::int32_t>::max()) {
      throw ConfigError("quantize_round: value out of integer range");
    }
    plane.values[i] = static_cast<std::int32_t>(v);
  }
  return plane;
}

#define MFVC_INSTANTIATE_OPS(T)                                                             \
  template Var<T> leaky_relu<T>(const Var<T>&, double);                                     \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                         \
  template Var<T> slice_channels<T>(const Var<T>&, int, int);                               \
  template Var<T> slice_batch<T>(const Var<T>&, int);                                       \
  template Var<T> crop_spatial<T>(const Var<T>&, int, int);                                 \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> add_scalar<T>(const Var<T>&, double);                                     \
  template Var<T> scale<T>(const Var<T>&, double);                                          \
  template Var<T> pow_scalar<T>(const Var<T>&, double);                                     \
  template Var<T> clamp<T>(const Var<T>&, double, double);                                  \
  template Var<T> mul_const<T>(const Var<T>&, const Tensor<T>&);                            \
  template Var<T> sum<T>(const Var<T>&);                                                    \
  template Var<T> mean<T>(const Var<T>&);                                                   \
  template Var<T> conditional_scale<T>(const Var<T>&, const Var<T>&, const Var<T>&,         \
                                       std::span<const int>);                               \
  template Var<T> broadcast_channels<T>(const Var<T>&, const Shape&);                       \
  template Var<T> add_uniform_noise<T>(const Var<T>&, std::uint64_t);                       \
  template Var<T> laplace_bits<T>(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> gaussian_blur_valid<T>(const Var<T>&, std::span<const double>);           \
  template Var<T> avg_pool2<T>(const Var<T>&);                                              \
  template Tensor<T> round_tensor<T>(const Tensor<T>&);                                     \
  template LatentPlane quantize_round<T>(const Tensor<T>&);

MFVC_INSTANTIATE_OPS(float)
MFVC_INSTANTIATE_OPS(double)

}  // namespace mfvc
