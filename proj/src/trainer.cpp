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

#include "mfvc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "mfvc/error.hpp"
#include "mfvc/metrics.hpp"

namespace mfvc {
namespace {

std::uint64_t iteration_seed(std::uint64_t seed, int iteration) {
  return seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(iteration) + 1;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

class CsvLog {
 public:
  explicit CsvLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw IoError(path + ": cannot open training log for writing");
    out_ << "iteration,lr,loss,rate,distortion\n";
    out_.precision(9);
  }
  void write(const TrainLogRow& r) {
    if (!out_.is_open()) return;
    out_ << r.iteration << ',' << r.lr << ',' << r.loss << ',' << r.rate << ',' << r.distortion << '\n';
  }

 private:
  std::ofstream out_;
};

// Copies a (1, C, ph, pw) window of `src` at (y, x) into item `n` of `dst`,
// mirrored horizontally when asked.
void copy_window(const Tensor<float>& src, int y, int x, bool flip, Tensor<float>& dst, int n) {
  const Shape s = dst.shape();
  for (int c = 0; c < s.c; ++c)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) dst(n, c, i, j) = src(0, c, y + i, x + (flip ? s.w - 1 - j : j));
}

void check_frame(const Tensor<float>& f, int patch_h, int patch_w, const std::string& what) {
  if (f.batch() != 1 || f.channels() != 3) throw ShapeError(what + ": expected a (1, 3, H, W) frame");
  if (f.height() < patch_h || f.width() < patch_w) {
    throw ConfigError(what + ": frame " + std::to_string(f.width()) + "x" + std::to_string(f.height()) +
                      " is smaller than the " + std::to_string(patch_w) + "x" + std::to_string(patch_h) + " patch");
  }
}

}  // namespace

Distortion parse_distortion(const std::string& name) {
  if (name == "mse") return Distortion::kMse;
  if (name == "ms-ssim" || name == "ms_ssim") return Distortion::kMsSsim;
  throw ConfigError("unknown distortion '" + name + "' (mse, ms-ssim)");
}

std::string distortion_name(Distortion d) { return d == Distortion::kMse ? "mse" : "ms-ssim"; }

void TrainConfig::validate(int factor) const {
  if (lambda_set.empty()) throw ConfigError("train: lambda_set is empty");
  for (double l : lambda_set)
    if (!(l > 0)) throw ConfigError("train: lambdas must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (patch_h < 1 || patch_w < 1) throw ConfigError("train: patch dimensions must be positive");
  if (patch_h % factor != 0 || patch_w % factor != 0) {
    throw ConfigError("train: patch " + std::to_string(patch_w) + "x" + std::to_string(patch_h) +
                      " is not divisible by the downsampling factor " + std::to_string(factor));
  }
  if (lr_values.empty()) throw ConfigError("train: lr_values is empty");
  for (double v : lr_values)
    if (!(v > 0)) throw ConfigError("train: learning rates must be positive");
  if (lr_boundaries.size() != lr_values.size() && lr_boundaries.size() + 1 != lr_values.size()) {
    throw ConfigError("train: lr_boundaries needs one entry per learning rate, or one fewer");
  }
  for (std::size_t i = 1; i < lr_boundaries.size(); ++i)
    if (lr_boundaries[i] <= lr_boundaries[i - 1]) throw ConfigError("train: lr_boundaries must be increasing");
  if (total_iters < 0) throw ConfigError("train: total_iters must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be non-negative");
  if (checkpoint_every > 0 && checkpoint_path.empty()) throw ConfigError("train: checkpoint_every needs a path");
}

double lr_at(int iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw ConfigError("lr_at: iteration must be non-negative");
  if (cfg.lr_values.empty()) throw ConfigError("lr_at: no learning rates");
  std::size_t stage = 0;
  for (int b : cfg.lr_boundaries)
    if (b <= iteration) ++stage;
  return cfg.lr_values[std::min(stage, cfg.lr_values.size() - 1)];
}

template <typename T>
int Adam<T>::step(const std::vector<ParamRef<T>>& params, double lr) {
  if (moments_.empty()) {
    for (const auto& p : params) moments_.push_back({Tensor<T>(p.var->shape()), Tensor<T>(p.var->shape())});
  }
  if (moments_.size() != params.size()) throw ConfigError("adam: parameter list changed between steps");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  int skipped = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T>& var = *params[i].var;
    if (!var.has_grad()) continue;
    const Tensor<T> g = var.grad();
    var.zero_grad();
    if (g.shape() != moments_[i].m.shape()) throw ShapeError("adam: moment buffer does not match " + params[i].name);
    if (!all_finite(g)) {
      ++skipped;
      continue;
    }
    Tensor<T>& m = moments_[i].m;
    Tensor<T>& v = moments_[i].v;
    Tensor<T>& x = var.mutable_value();
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = g[k];
      const double mk = beta1_ * m[k] + (1 - beta1_) * gk;
      const double vk = beta2_ * v[k] + (1 - beta2_) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      x[k] = static_cast<T>(x[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + eps_));
    }
  }
  skipped_ += skipped;
  return skipped;
}

template <typename T>
ImageLoss<T> loss_i(const Var<T>& frames, std::span<const int> rates, const QuantMode& mode, Distortion distortion,
                    const AutoencoderWeights<T>& w) {
  const Shape s = frames.shape();
  const IFrameForward<T> f = iframe_forward(frames, rates, mode, w);
  const double pixels = static_cast<double>(s.h) * s.w;
  ImageLoss<T> out;
  Var<T> total;
  for (int n = 0; n < s.n; ++n) {
    const double lambda = w.config.lambdas.at(static_cast<std::size_t>(rates[n]));
    const Var<T> r = scale(add(sum(slice_batch(f.y_bits, n)), sum(slice_batch(f.z_bits, n))), 1.0 / pixels);
    const Var<T> x = slice_batch(frames, n), xr = slice_batch(f.recon, n);
    Var<T> d;
    if (distortion == Distortion::kMse) {
      const Var<T> e = sub(xr, x);
      d = mean(mul(e, e));
    } else {
      const int scales = std::min(3, ms_ssim_max_scales(s.h, s.w));
      if (scales < 1) throw ConfigError("loss_i: patch too small for MS-SSIM");
      d = add_scalar(scale(ms_ssim(xr, x, scales), -1.0), 1.0);
    }
    const Var<T> item = add(r, scale(d, lambda));
    total = total.defined() ? add(total, item) : item;
    out.rate += r.value()[0] / s.n;
    out.distortion += d.value()[0] / s.n;
  }
  out.loss = scale(total, 1.0 / s.n);
  return out;
}

template <typename T>
Var<T> loss_p(const Var<T>& y_t, const Var<T>& y_prev, const StemFlags& flags, const QuantMode& mode,
              const StemWeights<T>& w) {
  const StemForward<T> f = stem_forward(y_t, y_prev, flags, mode, w);
  return scale(add(sum(f.y_bits), sum(f.z_bits)), 1.0 / static_cast<double>(y_t.shape().size()));
}

AutoencoderWeights<float> train_image_model(const std::vector<Tensor<float>>& frames, const ImageCodecConfig& model,
                                            const TrainConfig& cfg, TrainReport* report,
                                            const TrainProgress& progress) {
  ImageCodecConfig mc = model;
  mc.lambdas = cfg.lambda_set;
  mc.validate();
  cfg.validate(mc.factor());
  if (frames.empty()) throw ConfigError("train-image: empty dataset");
  for (const auto& f : frames) check_frame(f, cfg.patch_h, cfg.patch_w, "train-image");

  std::mt19937_64 rng(cfg.seed);
  AutoencoderWeights<float> w = init_autoencoder<float>(mc, cfg.seed);
  const auto params = w.params();
  Adam<float> adam;
  CsvLog log(cfg.log_path);
  Tensor<float> batch(Shape{cfg.batch_size, 3, cfg.patch_h, cfg.patch_w});
  std::vector<int> rates(static_cast<std::size_t>(cfg.batch_size));

  for (int it = 0; it < cfg.total_iters; ++it) {
    for (int n = 0; n < cfg.batch_size; ++n) {
      const Tensor<float>& f = frames[rng() % frames.size()];
      const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(f.height() - cfg.patch_h + 1));
      const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(f.width() - cfg.patch_w + 1));
      copy_window(f, y, x, (rng() & 1) != 0, batch, n);
      rates[n] = static_cast<int>(rng() % static_cast<std::uint64_t>(mc.rates()));
    }
    const QuantMode mode{true, iteration_seed(cfg.seed, it)};
    const ImageLoss<float> l = loss_i<float>(Var<float>::constant(batch), rates, mode, cfg.distortion, w);
    backward(l.loss);
    const double lr = lr_at(it, cfg);
    adam.step(params, lr);

    const TrainLogRow row{it, lr, l.loss.value()[0], l.rate, l.distortion};
    log.write(row);
    if (report) report->log.push_back(row);
    if (progress) progress(row);
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) w.to_file().save(cfg.checkpoint_path);
  }
  if (report) report->skipped_updates = adam.skipped();
  w.set_trainable(false);
  return w;
}

StemWeights<float> train_stem(const std::vector<std::vector<Tensor<float>>>& clips,
                              const AutoencoderWeights<float>& frozen, const StemConfig& model, const TrainConfig& cfg,
                              const StemFlags& flags, TrainReport* report, const TrainProgress& progress) {
  const ImageCodecConfig& ac = frozen.config;
  cfg.validate(ac.factor());
  model.validate();
  if (model.latent_channels != ac.latent_channels) {
    throw ConfigError("train-stem: entropy model expects " + std::to_string(model.latent_channels) +
                      " latent channels, auto-encoder has " + std::to_string(ac.latent_channels));
  }
  std::vector<const std::vector<Tensor<float>>*> usable;
  for (const auto& c : clips) {
    if (c.size() < 2) continue;
    for (const auto& f : c) check_frame(f, cfg.patch_h, cfg.patch_w, "train-stem");
    usable.push_back(&c);
  }
  if (usable.empty()) throw ConfigError("train-stem: no clip has at least two frames");

  // Latents of the first seven frames of every clip at every rate.
  const int factor = ac.factor();
  std::vector<std::vector<std::vector<Tensor<float>>>> latents(usable.size());
  for (std::size_t c = 0; c < usable.size(); ++c) {
    const auto& clip = *usable[c];
    const std::size_t n = std::min<std::size_t>(clip.size(), 7);
    latents[c].resize(static_cast<std::size_t>(ac.rates()));
    for (int r = 0; r < ac.rates(); ++r)
      for (std::size_t t = 0; t < n; ++t) {
        const Tensor<float>& f = clip[t];
        const int h = f.height() / factor * factor, wd = f.width() / factor * factor;
        Tensor<float> crop(Shape{1, 3, h, wd});
        copy_window(f, 0, 0, false, crop, 0);
        latents[c][r].push_back(round_tensor(analyze_frame(crop, rate_index(ac, r), frozen)));
      }
  }

  std::mt19937_64 rng(cfg.seed);
  StemWeights<float> w = init_stem<float>(model, cfg.seed);
  const auto params = w.params();
  Adam<float> adam;
  CsvLog log(cfg.log_path);
  const int lh = cfg.patch_h / factor, lw = cfg.patch_w / factor;
  Tensor<float> cur(Shape{cfg.batch_size, ac.latent_channels, lh, lw}), ref(cur.shape());

  for (int it = 0; it < cfg.total_iters; ++it) {
    const int r = static_cast<int>(rng() % static_cast<std::uint64_t>(ac.rates()));
    for (int n = 0; n < cfg.batch_size; ++n) {
      const auto& seq = latents[rng() % latents.size()][static_cast<std::size_t>(r)];
      const std::size_t t = 1 + rng() % (seq.size() - 1);
      const Tensor<float>& y0 = seq[0];
      const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(y0.height() - lh + 1));
      const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(y0.width() - lw + 1));
      copy_window(y0, y, x, false, ref, n);
      copy_window(seq[t], y, x, false, cur, n);
    }
    const QuantMode mode{true, iteration_seed(cfg.seed, it)};
    const Var<float> loss = loss_p<float>(Var<float>::constant(cur), Var<float>::constant(ref), flags, mode, w);
    backward(loss);
    const double lr = lr_at(it, cfg);
    adam.step(params, lr);

    const TrainLogRow row{it, lr, loss.value()[0], loss.value()[0], 0.0};
    log.write(row);
    if (report) report->log.push_back(row);
    if (progress) progress(row);
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      w.to_file(flags).save(cfg.checkpoint_path);
    }
  }
  if (report) report->skipped_updates = adam.skipped();
  w.set_trainable(false);
  return w;
}

template class Adam<float>;
template class Adam<double>;
template ImageLoss<float> loss_i<float>(const Var<float>&, std::span<const int>, const QuantMode&, Distortion,
                                        const AutoencoderWeights<float>&);
template ImageLoss<double> loss_i<double>(const Var<double>&, std::span<const int>, const QuantMode&, Distortion,
                                          const AutoencoderWeights<double>&);
template Var<float> loss_p<float>(const Var<float>&, const Var<float>&, const StemFlags&, const QuantMode&,
                                  const StemWeights<float>&);
template Var<double> loss_p<double>(const Var<double>&, const Var<double>&, const StemFlags&, const QuantMode&,
                                    const StemWeights<double>&);

}  // namespace mfvc
