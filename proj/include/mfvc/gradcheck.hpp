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

#include <algorithm>
#include <cmath>
#include <functional>

#include "mfvc/autograd.hpp"

namespace mfvc {

template <typename T>
using ScalarFn = std::function<Var<T>(const Var<T>&)>;

template <typename T>
struct GradientPair {
  Tensor<T> analytic;
  Tensor<double> central;
};

// Backward-pass gradient of f at x next to its central difference. The
// step actually taken after rounding x +- h to T is used as the denominator
// of the difference quotient.
template <typename T>
GradientPair<T> finite_diff_gradients(const ScalarFn<T>& f, const Tensor<T>& x, double h) {
  if (!(h > 0)) throw ConfigError("finite_diff_check: step must be positive");
  Var<T> xv = Var<T>::parameter(x);
  Var<T> loss = f(xv);
  backward(loss);
  GradientPair<T> out{xv.grad(), Tensor<double>(x.shape())};
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T plus = static_cast<T>(x[i] + h);
    const T minus = static_cast<T>(x[i] - h);
    probe[i] = plus;
    const double f_plus = f(Var<T>::constant(probe)).value()[0];
    probe[i] = minus;
    const double f_minus = f(Var<T>::constant(probe)).value()[0];
    probe[i] = x[i];
    out.central[i] = (f_plus - f_minus) / (static_cast<double>(plus) - minus);
  }
  return out;
}

// Max over elements of |analytic - central| / max(|analytic|, |central|,
// 1e-8).
template <typename T>
double finite_diff_check(const ScalarFn<T>& f, const Tensor<T>& x, double h) {
  const GradientPair<T> g = finite_diff_gradients(f, x, h);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = g.analytic[i], c = g.central[i];
    worst = std::max(worst, std::fabs(a - c) / std::max({std::fabs(a), std::fabs(c), 1e-8}));
  }
  return worst;
}

// ||analytic - central|| / max(||analytic||, ||central||) over the whole
// tensor. Used for deep models, where single near-zero components are
// dominated by rounding noise in the difference quotient.
template <typename T>
double finite_diff_check_norm(const ScalarFn<T>& f, const Tensor<T>& x, double h) {
  const GradientPair<T> g = finite_diff_gradients(f, x, h);
  double diff = 0, na = 0, nc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = g.analytic[i], c = g.central[i];
    diff += (a - c) * (a - c);
    na += a * a;
    nc += c * c;
  }
  const double denom = std::sqrt(std::max({na, nc, 1e-30}));
  return std::sqrt(diff) / denom;
}

}  // namespace mfvc
