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

#include "mfvc/stem.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mfvc/error.hpp"
#include "mfvc/laplace.hpp"

namespace mfvc {
namespace {

constexpr int kSpmKernel = 5;

int scaled_width(int reference, int latent_channels) {
  return std::max(1, static_cast<int>(std::lround(reference * latent_channels / 320.0)));
}

void check_pair(const LatentPlane& a, const LatentPlane& b, const char* what) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": latent shapes differ " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename T>
Var<T> zeros_like_extent(const Var<T>& ref, int channels) {
  const Shape s = ref.shape();
  return Var<T>::constant(Tensor<T>(Shape{s.n, channels, s.h, s.w}));
}

float leaky(double v, double slope) { return static_cast<float>(v >= 0 ? v : slope * v); }

// Entropy parameters one latent position at a time, in scan order, with the
// spatial prior evaluated on the symbols decoded so far. The encoder runs the
// same code over the known plane so both sides produce identical PMFs.
class SerialEntropyModel {
 public:
  SerialEntropyModel(const Tensor<float>& phd_out, const Tensor<float>& tpm_out, const StemFlags& flags,
                     const StemWeights<float>& w)
      : flags_(flags), w_(w), channels_(w.config.latent_channels) {
    // First EPM layer with the SPM slice zeroed; the per-position SPM term is
    // added on top.
    const Var<float> spm_zero = Var<float>::constant(
        Tensor<float>(Shape{1, w.config.spm_channels, phd_out.height(), phd_out.width()}));
    const Var<float> fused = concat_channels(concat_channels(Var<float>::constant(phd_out), spm_zero),
                                             Var<float>::constant(tpm_out));
    base_ = apply(w.epm[0], fused).value();
    masked_kernel_ = w.spm.kernel.value();
    const Tensor<float>& mask = *w.spm.mask;
    const int k = kSpmKernel;
    for (std::size_t i = 0; i < masked_kernel_.size(); ++i) masked_kernel_[i] *= mask[i % (k * k)];
    mu_.resize(static_cast<std::size_t>(channels_));
    log_scale_.resize(static_cast<std::size_t>(channels_));
  }

  PmfProvider provider() {
    return [this](std::size_t i, const LatentPlane& plane) {
      const int c = static_cast<int>(i % static_cast<std::size_t>(channels_));
      if (c == 0) {
        const std::size_t pos = i / static_cast<std::size_t>(channels_);
        compute(static_cast<int>(pos / plane.width), static_cast<int>(pos % plane.width), plane);
      }
      return discretize_laplacian(mu_[static_cast<std::size_t>(c)], log_scale_[static_cast<std::size_t>(c)]);
    };
  }

 private:
  void compute(int y, int x, const LatentPlane& plane) {
    const StemConfig& cfg = w_.config;
    const double slope = cfg.slope;
    const int e0 = cfg.epm_channels[0];
    std::vector<double> h0(static_cast<std::size_t>(e0));
    for (int o = 0; o < e0; ++o) h0[static_cast<std::size_t>(o)] = base_(0, o, y, x);

    if (flags_.use_spm) {
      const int k = kSpmKernel, r = k / 2;
      const int S = cfg.spm_channels, C = channels_;
      const Tensor<float>& bias = w_.spm.bias.value();
      std::vector<float> spm(static_cast<std::size_t>(S));
      for (int s = 0; s < S; ++s) {
        double acc = bias[static_cast<std::size_t>(s)];
        for (int c = 0; c < C; ++c) {
          // Only rows up to the center carry nonzero mask entries.
          for (int ky = 0; ky <= r; ++ky) {
            const int yy = y + ky - r;
            if (yy < 0) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int xx = x + kx - r;
              if (xx < 0 || xx >= plane.width) continue;
              const float kv = masked_kernel_(s, c, ky, kx);
              if (kv != 0.0f) acc += static_cast<double>(kv) * plane.at(c, yy, xx);
            }
          }
        }
        spm[static_cast<std::size_t>(s)] = static_cast<float>(acc);
      }
      const Tensor<float>& k0 = w_.epm[0].kernel.value();
      const int fused = cfg.fused_channels(), offset = cfg.phd_channels();
      for (int o = 0; o < e0; ++o) {
        double acc = 0;
        const float* row = k0.data() + static_cast<std::size_t>(o) * fused + offset;
        for (int s = 0; s < S; ++s) acc += static_cast<double>(row[s]) * spm[static_cast<std::size_t>(s)];
        h0[static_cast<std::size_t>(o)] = static_cast<float>(h0[static_cast<std::size_t>(o)] + acc);
      }
    }

    std::vector<float> act(h0.size());
    for (std::size_t i = 0; i < h0.size(); ++i) act[i] = leaky(h0[i], slope);
    for (std::size_t l = 1; l < w_.epm.size(); ++l) {
      const Tensor<float>& kern = w_.epm[l].kernel.value();
      const Tensor<float>& bias = w_.epm[l].bias.value();
      const int out = kern.shape().n, in = kern.shape().c;
      std::vector<float> next(static_cast<std::size_t>(out));
      for (int o = 0; o < out; ++o) {
        double acc = bias[static_cast<std::size_t>(o)];
        const float* row = kern.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * act[static_cast<std::size_t>(i)];
        const bool last = l + 1 == w_.epm.size();
        next[static_cast<std::size_t>(o)] = last ? static_cast<float>(acc) : leaky(acc, slope);
      }
      act = std::move(next);
    }
    for (int c = 0; c < channels_; ++c) {
      mu_[static_cast<std::size_t>(c)] = act[static_cast<std::size_t>(c)];
      log_scale_[static_cast<std::size_t>(c)] =
          std::clamp(act[static_cast<std::size_t>(channels_ + c)], static_cast<float>(kLogScaleMin),
                     static_cast<float>(kLogScaleMax));
    }
  }

  StemFlags flags_;
  const StemWeights<float>& w_;
  int channels_;
  Tensor<float> base_;
  Tensor<float> masked_kernel_;
  std::vector<float> mu_;
  std::vector<float> log_scale_;
};

Tensor<float> phd_features(const LatentPlane& z_hat, int height, int width, const StemWeights<float>& w) {
  return phd_forward(Var<float>::constant(to_tensor<float>(z_hat)), height, width, w).value();
}

Tensor<float> tpm_features(const LatentPlane& y_prev, const StemFlags& flags, const StemWeights<float>& w) {
  if (!flags.use_tpm) {
    return Tensor<float>(Shape{1, w.config.tpm_channels.back(), y_prev.height, y_prev.width});
  }
  return temporal_prior(y_prev, w);
}

}  // namespace

StemConfig StemConfig::scaled(int latent_channels) {
  StemConfig cfg;
  const int C = latent_channels;
  cfg.latent_channels = C;
  cfg.hyper_channels = scaled_width(256, C);
  cfg.tpm_channels = {scaled_width(426, C), scaled_width(533, C), scaled_width(640, C)};
  cfg.spm_channels = scaled_width(640, C);
  cfg.epm_channels = {scaled_width(1600, C), scaled_width(1280, C)};
  return cfg;
}

void StemConfig::validate() const {
  if (latent_channels < 1 || hyper_channels < 1 || spm_channels < 1) {
    throw ConfigError("stem: channel counts must be positive");
  }
  if (tpm_channels.size() != 3) throw ConfigError("stem: the temporal prior has exactly three convolutions");
  if (epm_channels.size() != 2) throw ConfigError("stem: the parameter fusion has two hidden 1x1 layers");
  for (int c : tpm_channels) {
    if (c < 1) throw ConfigError("stem: channel counts must be positive");
  }
  for (int c : epm_channels) {
    if (c < 1) throw ConfigError("stem: channel counts must be positive");
  }
  if (!(slope > 0 && slope < 1)) throw ConfigError("stem: leaky slope must be in (0, 1)");
}

std::uint8_t StemFlags::bits() const {
  return static_cast<std::uint8_t>((use_spm ? 1 : 0) | (use_tpm ? 2 : 0) | (use_residual ? 4 : 0));
}

StemFlags StemFlags::from_bits(std::uint8_t bits) {
  if (bits & ~7u) throw CorruptStreamError("unknown stem flag bits " + std::to_string(bits));
  return {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
}

std::string StemFlags::name() const {
  if (use_spm && use_tpm && use_residual) return "full";
  std::string s;
  auto add = [&](const char* part) { s += s.empty() ? std::string("no_") + part : std::string("_") + part; };
  if (!use_spm) add("spm");
  if (!use_tpm) add("tpm");
  if (!use_residual) add("residual");
  return s;
}

template <typename T>
std::vector<ParamRef<T>> StemWeights<T>::params() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < phe.size(); ++i) add_layer_params(out, "phe." + std::to_string(i), phe[i]);
  for (std::size_t i = 0; i < phd.size(); ++i) add_layer_params(out, "phd." + std::to_string(i), phd[i]);
  for (std::size_t i = 0; i < tpm.size(); ++i) add_layer_params(out, "tpm." + std::to_string(i), tpm[i]);
  add_layer_params(out, "spm", spm);
  for (std::size_t i = 0; i < epm.size(); ++i) add_layer_params(out, "epm." + std::to_string(i), epm[i]);
  out.push_back({"z_prior.mu", &z_mu});
  out.push_back({"z_prior.log_scale", &z_log_scale});
  return out;
}

template <typename T>
WeightsFile StemWeights<T>::to_file(const StemFlags& flags) const {
  WeightsFile f;
  const StemConfig& c = config;
  f.put("config.stem",
        pack_values({static_cast<double>(c.latent_channels), static_cast<double>(c.hyper_channels),
                     static_cast<double>(c.tpm_channels[0]), static_cast<double>(c.tpm_channels[1]),
                     static_cast<double>(c.tpm_channels[2]), static_cast<double>(c.spm_channels),
                     static_cast<double>(c.epm_channels[0]), static_cast<double>(c.epm_channels[1]), c.slope}));
  f.put("config.flags", pack_values({static_cast<double>(flags.bits())}));
  export_params(const_cast<StemWeights*>(this)->params(), f);
  return f;
}

template <typename T>
StemWeights<T> init_stem(const StemConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int C = cfg.latent_channels, H = cfg.hyper_channels;
  StemWeights<T> w;
  w.config = cfg;
  w.phe.push_back(make_conv<T>(2 * C, H, 3, 1, rng));
  w.phe.push_back(make_conv<T>(H, H, 5, 2, rng));
  w.phe.push_back(make_conv<T>(H, H, 5, 2, rng));
  w.phd.push_back(make_transpose_conv<T>(H, H, 5, 2, rng));
  w.phd.push_back(make_transpose_conv<T>(H, H, 5, 2, rng));
  w.phd.push_back(make_conv<T>(H, cfg.phd_channels(), 3, 1, rng));
  int in = C;
  for (int out : cfg.tpm_channels) {
    w.tpm.push_back(make_conv<T>(in, out, 5, 1, rng));
    in = out;
  }
  w.spm = make_masked_conv<T>(C, cfg.spm_channels, kSpmKernel, rng);
  in = cfg.fused_channels();
  for (int out : cfg.epm_channels) {
    w.epm.push_back(make_conv<T>(in, out, 1, 1, rng));
    in = out;
  }
  w.epm.push_back(make_conv<T>(in, 2 * C, 1, 1, rng));
  w.z_mu = Var<T>::parameter(Tensor<T>(Shape{1, H, 1, 1}));
  w.z_log_scale = Var<T>::parameter(Tensor<T>(Shape{1, H, 1, 1}));
  return w;
}

template <typename T>
StemWeights<T> stem_from_file(const WeightsFile& file) {
  const auto v = unpack_values(file.get("config.stem"));
  if (v.size() != 9) throw ConfigError("weights: malformed config.stem");
  StemConfig cfg;
  cfg.latent_channels = static_cast<int>(v[0]);
  cfg.hyper_channels = static_cast<int>(v[1]);
  cfg.tpm_channels = {static_cast<int>(v[2]), static_cast<int>(v[3]), static_cast<int>(v[4])};
  cfg.spm_channels = static_cast<int>(v[5]);
  cfg.epm_channels = {static_cast<int>(v[6]), static_cast<int>(v[7])};
  cfg.slope = v[8];
  StemWeights<T> w = init_stem<T>(cfg, 0);
  import_params(w.params(), file);
  return w;
}

StemWeights<float> load_stem(const std::string& path) {
  auto w = stem_from_file<float>(WeightsFile::load(path));
  w.set_trainable(false);
  return w;
}

StemFlags stem_trained_flags(const WeightsFile& file) {
  const auto v = unpack_values(file.get("config.flags"));
  if (v.size() != 1) throw ConfigError("weights: malformed config.flags");
  return StemFlags::from_bits(static_cast<std::uint8_t>(v[0]));
}

LatentPlane residual_latent(const LatentPlane& y_t, const LatentPlane& y_prev) {
  check_pair(y_t, y_prev, "residual_latent");
  LatentPlane out = y_t;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= y_prev.values[i];
  return out;
}

LatentPlane reconstruct_latent(const LatentPlane& res, const LatentPlane& y_prev) {
  check_pair(res, y_prev, "reconstruct_latent");
  LatentPlane out = res;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += y_prev.values[i];
  return out;
}

template <typename T>
Var<T> phe_forward(const Var<T>& y_t, const Var<T>& y_prev, const StemWeights<T>& w) {
  Var<T> x = concat_channels(y_t, y_prev);
  for (std::size_t i = 0; i < w.phe.size(); ++i) {
    x = apply(w.phe[i], x);
    if (i + 1 < w.phe.size()) x = leaky_relu(x, w.config.slope);
  }
  return x;
}

template <typename T>
Var<T> phd_forward(const Var<T>& z_hat, int height, int width, const StemWeights<T>& w) {
  Var<T> x = z_hat;
  for (std::size_t i = 0; i < w.phd.size(); ++i) {
    x = apply(w.phd[i], x);
    if (i + 1 < w.phd.size()) x = leaky_relu(x, w.config.slope);
  }
  return crop_spatial(x, height, width);
}

template <typename T>
Var<T> tpm_forward(const Var<T>& y_prev, const StemWeights<T>& w) {
  Var<T> x = y_prev;
  for (std::size_t i = 0; i < w.tpm.size(); ++i) {
    x = apply(w.tpm[i], x);
    if (i + 1 < w.tpm.size()) x = leaky_relu(x, w.config.slope);
  }
  return x;
}

template <typename T>
Var<T> spm_forward(const Var<T>& context, const StemWeights<T>& w) {
  return masked_conv2d(context, w.spm);
}

template <typename T>
LaplaceParams<T> epm_forward(const Var<T>& phd_out, const Var<T>& spm_out, const Var<T>& tpm_out,
                             const StemFlags& flags, const StemWeights<T>& w) {
  const StemConfig& cfg = w.config;
  if (phd_out.shape().c != cfg.phd_channels() || spm_out.shape().c != cfg.spm_channels ||
      tpm_out.shape().c != cfg.tpm_channels.back()) {
    throw ShapeError("entropy_params: feature channel counts do not match the model");
  }
  const Var<T> spm = flags.use_spm ? spm_out : zeros_like_extent(spm_out, cfg.spm_channels);
  const Var<T> tpm = flags.use_tpm ? tpm_out : zeros_like_extent(tpm_out, cfg.tpm_channels.back());
  Var<T> x = concat_channels(concat_channels(phd_out, spm), tpm);
  for (std::size_t i = 0; i < w.epm.size(); ++i) {
    x = apply(w.epm[i], x);
    if (i + 1 < w.epm.size()) x = leaky_relu(x, cfg.slope);
  }
  const int C = cfg.latent_channels;
  return {slice_channels(x, 0, C), clamp(slice_channels(x, C, C), kLogScaleMin, kLogScaleMax)};
}

template <typename T>
StemForward<T> stem_forward(const Var<T>& y_t, const Var<T>& y_prev, const StemFlags& flags, const QuantMode& mode,
                            const StemWeights<T>& w) {
  check_same_shape(y_t.shape(), y_prev.shape(), "stem_forward");
  const Shape s = y_t.shape();
  if (s.c != w.config.latent_channels) {
    throw ShapeError("stem: latent has " + std::to_string(s.c) + " channels, model expects " +
                     std::to_string(w.config.latent_channels));
  }
  StemForward<T> f;
  const Var<T> z = quantize_like(phe_forward(y_t, y_prev, w), mode, 3);
  f.z_bits = z_prior_bits(z, w.z_mu, w.z_log_scale);
  const Var<T> phd = phd_forward(z, s.h, s.w, w);
  const Var<T> tpm = flags.use_tpm ? tpm_forward(y_prev, w) : zeros_like_extent(y_t, w.config.tpm_channels.back());
  f.coded = flags.use_residual ? sub(y_t, y_prev) : y_t;
  const Var<T> spm = flags.use_spm ? spm_forward(f.coded, w) : zeros_like_extent(y_t, w.config.spm_channels);
  const auto p = epm_forward(phd, spm, tpm, flags, w);
  f.mu = p.mu;
  f.log_scale = p.log_scale;
  f.y_bits = laplace_bits(f.coded, f.mu, f.log_scale);
  return f;
}

HyperResult hyper_encode(const LatentPlane& y_t, const LatentPlane& y_prev, const StemWeights<float>& w) {
  check_pair(y_t, y_prev, "hyper_encode");
  HyperResult out;
  const Tensor<float> z =
      phe_forward(Var<float>::constant(to_tensor<float>(y_t)), Var<float>::constant(to_tensor<float>(y_prev)), w)
          .value();
  out.z_hat = quantize_round(z);
  out.z_bits = sum(z_prior_bits(Var<float>::constant(to_tensor<float>(out.z_hat)), w.z_mu.detach(),
                                w.z_log_scale.detach()))
                   .value()[0];
  return out;
}

Tensor<float> temporal_prior(const LatentPlane& y_prev, const StemWeights<float>& w) {
  return tpm_forward(Var<float>::constant(to_tensor<float>(y_prev)), w).value();
}

Tensor<float> spatial_prior(const LatentPlane& context, const StemWeights<float>& w) {
  return spm_forward(Var<float>::constant(to_tensor<float>(context)), w).value();
}

EntropyParams entropy_params(const Tensor<float>& phd_out, const Tensor<float>& spm_out, const Tensor<float>& tpm_out,
                             const StemFlags& flags, const StemWeights<float>& w) {
  const Shape a = phd_out.shape(), b = spm_out.shape(), c = tpm_out.shape();
  if (a.n != b.n || a.n != c.n || a.h != b.h || a.h != c.h || a.w != b.w || a.w != c.w) {
    throw ShapeError("entropy_params: feature extents disagree " + a.str() + ", " + b.str() + ", " + c.str());
  }
  const auto p = epm_forward(Var<float>::constant(phd_out), Var<float>::constant(spm_out),
                             Var<float>::constant(tpm_out), flags, w);
  return {p.mu.value(), p.log_scale.value()};
}

PFrameRate p_frame_rate(const LatentPlane& y_t, const LatentPlane& y_prev, const StemFlags& flags,
                        const StemWeights<float>& w) {
  check_pair(y_t, y_prev, "p_frame_rate");
  const auto f = stem_forward(Var<float>::constant(to_tensor<float>(y_t)),
                              Var<float>::constant(to_tensor<float>(y_prev)), flags, QuantMode{}, w);
  PFrameRate out;
  out.symbol_bits = f.y_bits.value();
  out.y_bits = sum(f.y_bits.detach()).value()[0];
  out.z_bits = sum(f.z_bits.detach()).value()[0];
  return out;
}

FrameChunk encode_pframe(const LatentPlane& y_t, const LatentPlane& y_prev, const StemFlags& flags,
                         const StemWeights<float>& w) {
  check_pair(y_t, y_prev, "encode_pframe");
  if (y_t.channels != w.config.latent_channels) {
    throw ShapeError("encode_pframe: latent has " + std::to_string(y_t.channels) + " channels, model expects " +
                     std::to_string(w.config.latent_channels));
  }
  FrameChunk chunk;
  chunk.type = FrameType::kPredicted;
  const HyperResult hyper = hyper_encode(y_t, y_prev, w);
  chunk.z_stream = encode_hyper(hyper.z_hat, z_prior_pmfs(w.z_mu.value(), w.z_log_scale.value())).bytes;
  SerialEntropyModel model(phd_features(hyper.z_hat, y_t.height, y_t.width, w), tpm_features(y_prev, flags, w),
                           flags, w);
  const LatentPlane coded = flags.use_residual ? residual_latent(y_t, y_prev) : y_t;
  chunk.y_stream = encode_plane(coded, model.provider(), kPFrameScan).bytes;
  return chunk;
}

LatentPlane decode_pframe(const FrameChunk& chunk, const LatentPlane& y_prev, const StemFlags& flags,
                          const StemWeights<float>& w) {
  if (chunk.type != FrameType::kPredicted) throw CorruptStreamError("expected a predicted chunk");
  if (y_prev.channels != w.config.latent_channels) {
    throw ShapeError("decode_pframe: reference latent does not match the model");
  }
  const int h = y_prev.height, wd = y_prev.width;
  const LatentPlane z_hat = decode_hyper(chunk.z_stream, z_prior_pmfs(w.z_mu.value(), w.z_log_scale.value()),
                                         w.config.hyper_channels, hyper_extent(h), hyper_extent(wd));
  SerialEntropyModel model(phd_features(z_hat, h, wd, w), tpm_features(y_prev, flags, w), flags, w);
  const LatentPlane coded =
      decode_plane(chunk.y_stream, model.provider(), LatentPlane(y_prev.channels, h, wd), kPFrameScan);
  return flags.use_residual ? reconstruct_latent(coded, y_prev) : coded;
}

#define MFVC_INSTANTIATE_STEM(T)                                                                          \
  template struct StemWeights<T>;                                                                         \
  template StemWeights<T> init_stem<T>(const StemConfig&, std::uint64_t);                                 \
  template StemWeights<T> stem_from_file<T>(const WeightsFile&);                                          \
  template Var<T> phe_forward<T>(const Var<T>&, const Var<T>&, const StemWeights<T>&);                    \
  template Var<T> phd_forward<T>(const Var<T>&, int, int, const StemWeights<T>&);                         \
  template Var<T> tpm_forward<T>(const Var<T>&, const StemWeights<T>&);                                   \
  template Var<T> spm_forward<T>(const Var<T>&, const StemWeights<T>&);                                   \
  template LaplaceParams<T> epm_forward<T>(const Var<T>&, const Var<T>&, const Var<T>&, const StemFlags&, \
                                           const StemWeights<T>&);                                        \
  template StemForward<T> stem_forward<T>(const Var<T>&, const Var<T>&, const StemFlags&, const QuantMode&, \
                                          const StemWeights<T>&);

MFVC_INSTANTIATE_STEM(float)
MFVC_INSTANTIATE_STEM(double)

}  // namespace mfvc
