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

#include "mfvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mfvc/bytes.hpp"
#include "mfvc/error.hpp"

namespace mfvc {
namespace {

void check_same_shape(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes differ, " + a.shape().str() + " vs " + b.shape().str());
  }
}

std::vector<double> gaussian_window() {
  std::vector<double> k(kSsimWindow);
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) k[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= s;
  return k;
}

// Fritsch-Carlson slopes for a monotone piecewise-cubic Hermite fit; needs
// at least three points.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> h(n - 1), d(n - 1), m(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    d[i] = (y[i + 1] - y[i]) / h[i];
  }
  auto sign = [](double v) { return (v > 0) - (v < 0); };
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (sign(d[k - 1]) * sign(d[k]) <= 0) continue;
    const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
    m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
  }
  auto edge = [&](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (sign(s) != sign(d0)) {
      s = 0;
    } else if (sign(d0) != sign(d1) && std::fabs(s) > 3 * std::fabs(d0)) {
      s = 3 * d0;
    }
    return s;
  };
  m[0] = edge(h[0], h[1], d[0], d[1]);
  m[n - 1] = edge(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  return m;
}

struct Pchip {
  std::vector<double> x, y, m;

  double operator()(double t) const {
    std::size_t i = std::upper_bound(x.begin(), x.end(), t) - x.begin();
    i = std::clamp<std::size_t>(i, 1, x.size() - 1) - 1;
    const double h = x[i + 1] - x[i], s = (t - x[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h * m[i] + (-2 * s3 + 3 * s2) * y[i + 1] +
           (s3 - s2) * h * m[i + 1];
  }

  // Exact: three-point Gauss-Legendre on each cubic piece.
  double integral(double lo, double hi) const {
    std::vector<double> cuts{lo};
    for (double k : x)
      if (k > lo && k < hi) cuts.push_back(k);
    cuts.push_back(hi);
    const double g = std::sqrt(0.6);
    double total = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double c = 0.5 * (cuts[i] + cuts[i + 1]), r = 0.5 * (cuts[i + 1] - cuts[i]);
      total += r * (5.0 / 9 * (*this)(c - g * r) + 8.0 / 9 * (*this)(c) + 5.0 / 9 * (*this)(c + g * r));
    }
    return total;
  }
};

Pchip fit_curve(std::vector<RdPoint> pts, const char* which) {
  if (pts.size() < 4) throw ConfigError(std::string("bd_rate: ") + which + " curve needs at least 4 points");
  std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
  Pchip p;
  for (const auto& q : pts) {
    if (!(q.bpp > 0) || !std::isfinite(q.quality)) {
      throw ConfigError(std::string("bd_rate: ") + which + " curve has a non-positive rate or bad quality");
    }
    if (!p.x.empty() && q.quality <= p.x.back()) {
      throw ConfigError(std::string("bd_rate: ") + which + " curve repeats a quality value");
    }
    p.x.push_back(q.quality);
    p.y.push_back(std::log(q.bpp));
  }
  p.m = pchip_slopes(p.x, p.y);
  return p;
}

}  // namespace

double mse_8bit(const Tensor<float>& a, const Tensor<float>& b) {
  check_same_shape(a, b, "mse");
  if (a.empty()) throw ShapeError("mse: empty frames");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 255.0 * (static_cast<double>(a[i]) - b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  const double mse = mse_8bit(a, b);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

int ms_ssim_min_size(int scales) { return (1 << (scales - 1)) * kSsimWindow; }

int ms_ssim_max_scales(int height, int width) {
  int s = 0;
  while (s < 5 && std::min(height, width) >= ms_ssim_min_size(s + 1)) ++s;
  return s;
}

template <typename T>
Var<T> ms_ssim(const Var<T>& a, const Var<T>& b, int scales) {
  if (scales < 1 || scales > 5) throw ConfigError("ms_ssim: scales must be in [1, 5]");
  if (a.shape() != b.shape()) throw ShapeError("ms_ssim: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
  if (a.shape().n != 1) throw ShapeError("ms_ssim: expected a single item, got " + a.shape().str());
  const int need = ms_ssim_min_size(scales);
  if (std::min(a.shape().h, a.shape().w) < need) {
    throw ShapeError("ms_ssim: " + std::to_string(scales) + " scales need frames of at least " + std::to_string(need) +
                     "x" + std::to_string(need) + ", got " + std::to_string(a.shape().w) + "x" +
                     std::to_string(a.shape().h));
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::vector<double> win = gaussian_window();
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];
  const int channels = a.shape().c;

  std::vector<Var<T>> per_channel(channels);
  Var<T> x = a, y = b;
  for (int s = 0; s < scales; ++s) {
    const Var<T> mx = gaussian_blur_valid(x, win), my = gaussian_blur_valid(y, win);
    const Var<T> mxx = mul(mx, mx), myy = mul(my, my), mxy = mul(mx, my);
    const Var<T> sxx = sub(gaussian_blur_valid(mul(x, x), win), mxx);
    const Var<T> syy = sub(gaussian_blur_valid(mul(y, y), win), myy);
    const Var<T> sxy = sub(gaussian_blur_valid(mul(x, y), win), mxy);
    Var<T> term = div(add_scalar(scale(sxy, 2.0), c2), add_scalar(add(sxx, syy), c2));
    if (s == scales - 1) {
      term = mul(term, div(add_scalar(scale(mxy, 2.0), c1), add_scalar(add(mxx, myy), c1)));
    }
    const double weight = kMsSsimWeights[s] / wsum;
    for (int c = 0; c < channels; ++c) {
      const Var<T> v = pow_scalar(clamp(mean(slice_channels(term, c, 1)), 1e-6, 1.0), weight);
      per_channel[c] = per_channel[c].defined() ? mul(per_channel[c], v) : v;
    }
    if (s + 1 < scales) {
      x = avg_pool2(x);
      y = avg_pool2(y);
    }
  }
  Var<T> total = per_channel[0];
  for (int c = 1; c < channels; ++c) total = add(total, per_channel[c]);
  return scale(total, 1.0 / channels);
}

double ms_ssim(const Tensor<float>& a, const Tensor<float>& b, int scales) {
  if (a.shape() != b.shape()) throw ShapeError("ms_ssim: shapes differ, " + a.shape().str() + " vs " + b.shape().str());
  return ms_ssim<double>(Var<double>::constant(a.cast<double>()), Var<double>::constant(b.cast<double>()), scales)
      .value()[0];
}

double bpp(std::uint64_t stream_bits, int width, int height, int frames) {
  if (width < 1 || height < 1 || frames < 1) throw ConfigError("bpp: dimensions must be positive");
  return static_cast<double>(stream_bits) / (static_cast<double>(width) * height * frames);
}

double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  const Pchip a = fit_curve(anchor, "anchor"), t = fit_curve(test, "test");
  const double lo = std::max(a.x.front(), t.x.front()), hi = std::min(a.x.back(), t.x.back());
  if (!(hi > lo)) throw ConfigError("bd_rate: the curves' quality ranges do not overlap");
  const double mean_diff = (t.integral(lo, hi) - a.integral(lo, hi)) / (hi - lo);
  return (std::exp(mean_diff) - 1.0) * 100.0;
}

double Heatmap::total() const { return std::accumulate(bits.begin(), bits.end(), 0.0); }

Heatmap entropy_heatmap(const Tensor<float>& symbol_bits, int factor) {
  const Shape s = symbol_bits.shape();
  if (s.n != 1) throw ShapeError("entropy_heatmap: expected a single plane, got " + s.str());
  if (factor < 1) throw ConfigError("entropy_heatmap: factor must be positive");
  Heatmap map;
  map.height = s.h * factor;
  map.width = s.w * factor;
  map.bits.assign(static_cast<std::size_t>(map.height) * map.width, 0.0);
  const double area = static_cast<double>(factor) * factor;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      double acc = 0;
      for (int c = 0; c < s.c; ++c) acc += symbol_bits(0, c, y, x);
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          map.bits[static_cast<std::size_t>(y * factor + dy) * map.width + x * factor + dx] = acc / area;
    }
  return map;
}

void write_heatmap_csv(const std::string& path, const Heatmap& map) {
  std::ostringstream out;
  out.precision(9);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) out << (x ? "," : "") << map.at(y, x);
    out << '\n';
  }
  const std::string text = out.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_heatmap_pgm(const std::string& path, const Heatmap& map) {
  const std::string head = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  const double peak = map.bits.empty() ? 0 : *std::max_element(map.bits.begin(), map.bits.end());
  for (double v : map.bits) {
    bytes.push_back(peak > 0 ? static_cast<std::uint8_t>(std::lround(std::clamp(v / peak, 0.0, 1.0) * 255.0)) : 0);
  }
  write_file(path, bytes);
}

std::string eval_csv(const std::vector<FrameEval>& rows) {
  std::string out = "frame_index,frame_type,bits,bpp,psnr,ms_ssim\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%s,%llu,%.6f,%.4f,%.6f\n", r.index, r.type == FrameType::kIntra ? "I" : "P",
                  static_cast<unsigned long long>(r.bits), r.bpp, r.psnr, r.ms_ssim);
    out += line;
  }
  return out;
}

template Var<float> ms_ssim<float>(const Var<float>&, const Var<float>&, int);
template Var<double> ms_ssim<double>(const Var<double>&, const Var<double>&, int);

}  // namespace mfvc
