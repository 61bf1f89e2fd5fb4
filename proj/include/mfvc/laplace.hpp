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

#include <cmath>

namespace mfvc {

inline constexpr double kLogScaleMin = -6.0;
inline constexpr double kLogScaleMax = 6.0;

// Laplacian CDF with location mu and scale b.
inline double laplace_cdf(double x, double mu, double b) {
  const double d = x - mu;
  return d < 0 ? 0.5 * std::exp(d / b) : 1.0 - 0.5 * std::exp(-d / b);
}

// Log of the mass the Laplacian puts on [value - 1/2, value + 1/2], with its
// partial derivatives. Computed per regime so that far tails stay finite.
struct LaplaceIntervalLog {
  double log_p = 0;
  double d_value = 0;      // d log_p / d value   (= -d log_p / d mu)
  double d_log_scale = 0;  // d log_p / d log b
};

inline LaplaceIntervalLog laplace_interval_log(double value, double mu, double log_scale) {
  const double b = std::exp(log_scale);
  const double d = value - mu;
  const double a = std::fabs(d);
  LaplaceIntervalLog r;
  if (a >= 0.5) {
    // Both interval ends on the same side of mu.
    const double inv_b = 1.0 / b;
    r.log_p = std::log(0.5) - (a - 0.5) * inv_b + std::log(-std::expm1(-inv_b));
    r.d_value = (d > 0 ? -1.0 : 1.0) * inv_b;
    r.d_log_scale = (a - 0.5) * inv_b - inv_b / std::expm1(inv_b);
  } else {
    const double e1 = std::exp(-(0.5 - d) / b);
    const double e2 = std::exp(-(0.5 + d) / b);
    const double p = 1.0 - 0.5 * e1 - 0.5 * e2;
    r.log_p = std::log(p);
    r.d_value = (e2 - e1) / (2.0 * b) / p;
    r.d_log_scale = -(e1 * (0.5 - d) + e2 * (0.5 + d)) / (2.0 * b) / p;
  }
  return r;
}

inline double laplace_interval_probability(double value, double mu, double b) {
  return std::exp(laplace_interval_log(value, mu, std::log(b)).log_p);
}

}  // namespace mfvc
