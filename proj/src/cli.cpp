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

#include "mfvc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "mfvc/bytes.hpp"
#include "mfvc/error.hpp"
#include "mfvc/metrics.hpp"
#include "mfvc/trainer.hpp"
#include "mfvc/video.hpp"

namespace mfvc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename I>
I parse_integer(const std::string& key, const std::string& v) {
  I out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(CliConfig&, const std::string&, const std::string&)>;

struct KeySpec {
  std::string key;
  std::string help;
  Setter set;
};

Setter text(std::string CliConfig::* field) {
  return [field](CliConfig& c, const std::string&, const std::string& v) { c.*field = v; };
}
Setter integer(int CliConfig::* field) {
  return [field](CliConfig& c, const std::string& k, const std::string& v) { c.*field = parse_integer<int>(k, v); };
}
Setter flag(std::optional<bool> CliConfig::* field) {
  return [field](CliConfig& c, const std::string& k, const std::string& v) { c.*field = parse_bool(k, v); };
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      {"input", "input file", text(&CliConfig::input)},
      {"output", "output file (prefix for heatmap)", text(&CliConfig::output)},
      {"reference", "original raw video to compare against", text(&CliConfig::reference)},
      {"weights", "auto-encoder weights", text(&CliConfig::weights)},
      {"stem", "entropy model weights", text(&CliConfig::stem)},
      {"stems", "comma-separated entropy model weights",
       [](CliConfig& c, const std::string&, const std::string& v) { c.stems = split_list(v); }},
      {"width", "frame width in pixels", integer(&CliConfig::width)},
      {"height", "frame height in pixels", integer(&CliConfig::height)},
      {"frames", "number of frames (0 for all)", integer(&CliConfig::frames)},
      {"frame", "frame index", integer(&CliConfig::frame)},
      {"gop_size", "frames per group of pictures", integer(&CliConfig::gop_size)},
      {"rate_index", "index into the lambda set", integer(&CliConfig::rate_index)},
      {"spm", "use the spatial prior", flag(&CliConfig::spm)},
      {"tpm", "use the temporal prior", flag(&CliConfig::tpm)},
      {"residual", "code latent residuals", flag(&CliConfig::residual)},
      {"seed", "random seed",
       [](CliConfig& c, const std::string& k, const std::string& v) { c.seed = parse_integer<std::uint64_t>(k, v); }},
      {"latent_channels", "latent channels C", integer(&CliConfig::latent_channels)},
      {"hidden_channels", "hidden channels of the transforms", integer(&CliConfig::hidden_channels)},
      {"hyper_channels", "hyper latent channels", integer(&CliConfig::hyper_channels)},
      {"stages", "stride-2 stages of the transforms", integer(&CliConfig::stages)},
      {"lambdas", "comma-separated lambda set",
       [](CliConfig& c, const std::string& k, const std::string& v) {
         c.lambdas.clear();
         for (const auto& s : split_list(v)) c.lambdas.push_back(parse_real(k, s));
       }},
      {"batch_size", "training batch size", integer(&CliConfig::batch_size)},
      {"patch_h", "training patch height", integer(&CliConfig::patch_h)},
      {"patch_w", "training patch width", integer(&CliConfig::patch_w)},
      {"lr_values", "comma-separated learning rates",
       [](CliConfig& c, const std::string& k, const std::string& v) {
         c.lr_values.clear();
         for (const auto& s : split_list(v)) c.lr_values.push_back(parse_real(k, s));
       }},
      {"lr_boundaries", "comma-separated iterations where the learning rate changes",
       [](CliConfig& c, const std::string& k, const std::string& v) {
         c.lr_boundaries.clear();
         for (const auto& s : split_list(v)) c.lr_boundaries.push_back(parse_integer<int>(k, s));
       }},
      {"iters", "training iterations", integer(&CliConfig::iters)},
      {"distortion", "mse or ms-ssim", text(&CliConfig::distortion)},
      {"log", "training log CSV", text(&CliConfig::log)},
      {"checkpoint", "checkpoint weights file", text(&CliConfig::checkpoint)},
      {"checkpoint_every", "iterations between checkpoints", integer(&CliConfig::checkpoint_every)},
      {"clip_frames", "frames per training clip; pairs are its first and a random later frame (train-stem)",
       integer(&CliConfig::clip_frames)},
      {"synthetic", "synthetic sequence kind: translate, zoom, noise_static", text(&CliConfig::synthetic)},
      {"synth_count", "synthetic textures or clips to generate", integer(&CliConfig::synth_count)},
      {"synth_size", "side of synthetic training frames", integer(&CliConfig::synth_size)},
      {"synth_shift", "largest per-frame shift of synthetic motion", integer(&CliConfig::synth_shift)},
  };
  return specs;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& s : key_specs())
    if (s.key == key) return &s;
  return nullptr;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void require(bool ok, const std::string& command, const std::string& key) {
  if (!ok) throw ConfigError(command + ": --" + dashed(key) + " is required");
}

std::vector<Frame> read_input_frames(const CliConfig& c, const std::string& command) {
  require(!c.input.empty(), command, "input");
  require(c.width > 0, command, "width");
  require(c.height > 0, command, "height");
  auto frames = read_raw_video(c.input, c.width, c.height);
  if (c.frames > 0 && static_cast<std::size_t>(c.frames) < frames.size()) frames.resize(c.frames);
  return frames;
}

// Input video, or a synthetic sequence when no input is given.
std::vector<Frame> sequence_frames(const CliConfig& c, const std::string& command) {
  if (!c.input.empty()) return read_input_frames(c, command);
  SynthOptions o;
  o.shift_x = c.synth_shift;
  const int n = c.frames > 0 ? c.frames : 12;
  const int w = c.width > 0 ? c.width : 64, h = c.height > 0 ? c.height : 64;
  return synth_sequence(parse_synth_kind(c.synthetic), n, h, w, c.seed, o);
}

StemFlags resolve_flags(const CliConfig& c, const StemFlags& base) {
  StemFlags f = base;
  if (c.spm) f.use_spm = *c.spm;
  if (c.tpm) f.use_tpm = *c.tpm;
  if (c.residual) f.use_residual = *c.residual;
  return f;
}

TrainConfig train_config(const CliConfig& c) {
  TrainConfig t;
  t.lambda_set = c.lambdas;
  t.batch_size = c.batch_size;
  t.patch_h = c.patch_h;
  t.patch_w = c.patch_w;
  t.lr_values = c.lr_values;
  t.lr_boundaries = c.lr_boundaries;
  t.total_iters = c.iters;
  t.distortion = parse_distortion(c.distortion);
  t.seed = c.seed;
  t.log_path = c.log;
  t.checkpoint_path = c.checkpoint;
  t.checkpoint_every = c.checkpoint_every;
  return t;
}

TrainProgress progress_printer(std::ostream& out, int total) {
  const int every = std::max(1, total / 20);
  return [&out, every, total](const TrainLogRow& r) {
    if (r.iteration % every != 0 && r.iteration + 1 != total) return;
    char line[160];
    std::snprintf(line, sizeof line, "iter %6d  lr %.2e  loss %.5f  rate %.5f  distortion %.6f\n", r.iteration, r.lr,
                  r.loss, r.rate, r.distortion);
    out << line << std::flush;
  };
}

int cmd_train_image(const CliConfig& c, std::ostream& out) {
  require(!c.output.empty(), "train-image", "output");
  ImageCodecConfig mc;
  mc.latent_channels = c.latent_channels;
  mc.hidden_channels = c.hidden_channels;
  mc.hyper_channels = c.hyper_channels;
  mc.stages = c.stages;
  mc.lambdas = c.lambdas;
  const TrainConfig tc = train_config(c);
  mc.validate();
  tc.validate(mc.factor());
  const std::vector<Frame> data =
      c.input.empty() ? synthetic_image_pool(c.synth_count, c.synth_size, c.seed) : read_input_frames(c, "train-image");
  TrainReport report;
  const auto w = train_image_model(data, mc, tc, &report, progress_printer(out, tc.total_iters));
  const WeightsFile file = w.to_file();
  file.save(c.output);
  out << "wrote " << c.output << " (digest " << digest_hex(file.digest()) << ", " << report.skipped_updates
      << " skipped updates)\n";
  return 0;
}

int cmd_train_stem(const CliConfig& c, std::ostream& out) {
  require(!c.weights.empty(), "train-stem", "weights");
  require(!c.output.empty(), "train-stem", "output");
  const auto ae = load_autoencoder(c.weights);
  const TrainConfig tc = train_config(c);
  tc.validate(ae.config.factor());
  if (c.clip_frames < 2 || c.clip_frames > 7) throw ConfigError("train-stem: --clip-frames must be in [2, 7]");
  const auto len = static_cast<std::size_t>(c.clip_frames);
  std::vector<std::vector<Frame>> clips;
  if (c.input.empty()) {
    clips = synthetic_clips(c.synth_count, c.clip_frames, c.synth_size, c.synth_shift, c.seed);
  } else {
    const auto frames = read_input_frames(c, "train-stem");
    for (std::size_t i = 0; i + 1 < frames.size(); i += len) {
      clips.emplace_back(frames.begin() + i, frames.begin() + std::min(frames.size(), i + len));
    }
  }
  const StemFlags flags = resolve_flags(c, StemFlags{});
  TrainReport report;
  const auto stem = train_stem(clips, ae, StemConfig::scaled(ae.config.latent_channels), tc, flags, &report,
                               progress_printer(out, tc.total_iters));
  const WeightsFile file = stem.to_file(flags);
  file.save(c.output);
  out << "wrote " << c.output << " (" << flags.name() << ", digest " << digest_hex(file.digest()) << ")\n";
  return 0;
}

int cmd_compress(const CliConfig& c, std::ostream& out) {
  require(!c.weights.empty(), "compress", "weights");
  require(!c.stem.empty(), "compress", "stem");
  require(!c.output.empty(), "compress", "output");
  const auto frames = read_input_frames(c, "compress");
  const CodecModels models = CodecModels::load(c.weights, c.stem);
  GopConfig g;
  g.gop_size = c.gop_size;
  g.rate_index = c.rate_index;
  g.flags = resolve_flags(c, models.trained_flags);
  const EncodedVideo enc = compress_video(frames, models, g);
  const auto bytes = enc.stream.serialize();
  write_file(c.output, bytes);
  char line[200];
  std::snprintf(line, sizeof line, "%zu frames, %zu bytes, %.4f bpp, entropy model %s\n", frames.size(), bytes.size(),
                bpp(8 * bytes.size(), c.width, c.height, static_cast<int>(frames.size())), g.flags.name().c_str());
  out << line;
  return 0;
}

int cmd_decompress(const CliConfig& c, std::ostream& out) {
  require(!c.input.empty(), "decompress", "input");
  require(!c.weights.empty(), "decompress", "weights");
  require(!c.stem.empty(), "decompress", "stem");
  require(!c.output.empty(), "decompress", "output");
  const auto bytes = read_file(c.input);
  const CodecModels models = CodecModels::load(c.weights, c.stem);
  const auto frames = decompress_video(bytes, models);
  write_raw_video(c.output, frames);
  out << "decoded " << frames.size() << " frames to " << c.output << "\n";
  return 0;
}

int cmd_eval(const CliConfig& c, std::ostream& out) {
  require(!c.input.empty(), "eval", "input");
  require(!c.reference.empty(), "eval", "reference");
  require(!c.weights.empty(), "eval", "weights");
  require(!c.stem.empty(), "eval", "stem");
  const auto bytes = read_file(c.input);
  const CodecModels models = CodecModels::load(c.weights, c.stem);
  const VideoBitstream stream = VideoBitstream::parse(bytes);
  const int w = static_cast<int>(stream.header.width), h = static_cast<int>(stream.header.height);
  const auto reference = read_raw_video(c.reference, w, h);
  if (reference.size() < stream.chunks.size()) {
    throw IoError(c.reference + ": has " + std::to_string(reference.size()) + " frames, stream has " +
                  std::to_string(stream.chunks.size()));
  }
  const int scales = ms_ssim_max_scales(h, w);
  VideoDecoder dec(bytes, models);
  std::vector<FrameEval> rows;
  while (auto f = dec.next()) {
    const std::size_t i = rows.size();
    FrameEval r;
    r.index = static_cast<int>(i);
    r.type = f->type;
    r.bits = 8 * stream.chunks[i].byte_size();
    r.bpp = bpp(r.bits, w, h, 1);
    r.psnr = psnr(reference[i], f->frame);
    r.ms_ssim = scales > 0 ? ms_ssim(reference[i], f->frame, scales) : std::nan("");
    rows.push_back(r);
  }
  const std::string csv = eval_csv(rows);
  if (c.output.empty()) {
    out << csv;
  } else {
    write_file(c.output, std::vector<std::uint8_t>(csv.begin(), csv.end()));
    double mean_psnr = 0;
    for (const auto& r : rows) mean_psnr += r.psnr / rows.size();
    char line[160];
    std::snprintf(line, sizeof line, "%zu frames, %.4f bpp, mean PSNR %.3f dB, wrote %s\n", rows.size(),
                  bpp(8 * bytes.size(), w, h, static_cast<int>(rows.size())), mean_psnr, c.output.c_str());
    out << line;
  }
  return 0;
}

int cmd_ablate(const CliConfig& c, std::ostream& out) {
  require(!c.weights.empty(), "ablate", "weights");
  require(!c.stems.empty(), "ablate", "stems");
  const auto frames = sequence_frames(c, "ablate");
  const int w = frames[0].width(), h = frames[0].height(), n = static_cast<int>(frames.size());

  const CodecModels first = CodecModels::load(c.weights, c.stems[0]);
  GopConfig intra;
  intra.gop_size = 1;
  intra.rate_index = c.rate_index;
  const double anchor = 8.0 * compress_video(frames, first, intra).stream.total_bytes();

  std::string report = "variant,bits,bpp,savings_percent\n";
  char line[200];
  std::snprintf(line, sizeof line, "%-22s %12s %9s %9s\n", "variant", "bits", "bpp", "savings");
  out << line;
  auto emit = [&](const std::string& name, double bits) {
    const double saving = 100.0 * (1.0 - bits / anchor);
    std::snprintf(line, sizeof line, "%-22s %12.0f %9.4f %8.2f%%\n", name.c_str(), bits, bits / (double(w) * h * n),
                  saving);
    out << line;
    std::snprintf(line, sizeof line, "%s,%.0f,%.6f,%.4f\n", name.c_str(), bits, bits / (double(w) * h * n), saving);
    report += line;
  };
  emit("i-frames only", anchor);
  for (const auto& path : c.stems) {
    const CodecModels m = CodecModels::load(c.weights, path);
    GopConfig g;
    g.gop_size = c.gop_size;
    g.rate_index = c.rate_index;
    g.flags = m.trained_flags;
    emit(m.trained_flags.name(), 8.0 * compress_video(frames, m, g).stream.total_bytes());
  }
  if (!c.output.empty()) write_file(c.output, std::vector<std::uint8_t>(report.begin(), report.end()));
  return 0;
}

int cmd_heatmap(const CliConfig& c, std::ostream& out) {
  require(!c.weights.empty(), "heatmap", "weights");
  require(!c.stem.empty(), "heatmap", "stem");
  require(!c.output.empty(), "heatmap", "output");
  if (c.frame < 1) throw ConfigError("heatmap: --frame must name a predicted frame (index >= 1)");
  auto frames = sequence_frames(c, "heatmap");
  if (static_cast<std::size_t>(c.frame) >= frames.size()) {
    throw ConfigError("heatmap: frame " + std::to_string(c.frame) + " is beyond the " +
                      std::to_string(frames.size()) + "-frame input");
  }
  frames.resize(static_cast<std::size_t>(c.frame) + 1);
  const CodecModels models = CodecModels::load(c.weights, c.stem);
  GopConfig g;
  g.gop_size = std::min(255, c.frame + 1);
  g.rate_index = c.rate_index;
  g.flags = resolve_flags(c, models.trained_flags);
  const EncodedVideo enc = compress_video(frames, models, g);
  const std::size_t k = static_cast<std::size_t>(c.frame);
  if (enc.stats[k].type != FrameType::kPredicted) throw ConfigError("heatmap: frame is not a predicted frame");
  const PFrameRate rate = p_frame_rate(enc.latents[k], enc.latents[k - 1], g.flags, models.stem);
  const Heatmap map = entropy_heatmap(rate.symbol_bits, models.ae.config.factor());
  write_heatmap_csv(c.output + ".csv", map);
  write_heatmap_pgm(c.output + ".pgm", map);
  char line[200];
  std::snprintf(line, sizeof line, "frame %d: %.1f latent bits, wrote %s.csv and %s.pgm\n", c.frame, map.total(),
                c.output.c_str(), c.output.c_str());
  out << line;
  return 0;
}

int cmd_synth(const CliConfig& c, std::ostream& out) {
  require(!c.output.empty(), "synth", "output");
  const auto frames = sequence_frames(c, "synth");
  write_raw_video(c.output, frames);
  out << "wrote " << frames.size() << " " << frames[0].width() << "x" << frames[0].height() << " frames to "
      << c.output << "\n";
  return 0;
}

struct CommandSpec {
  Command command;
  std::string name;
  std::string help;
  std::vector<std::string> keys;
  std::function<int(const CliConfig&, std::ostream&)> fn;
};

const std::vector<std::string> kData{"input", "width", "height", "frames", "synthetic", "synth_count", "synth_size",
                                     "synth_shift", "seed"};
const std::vector<std::string> kTrain{"batch_size", "patch_h", "patch_w", "lr_values", "lr_boundaries", "iters",
                                      "distortion", "log", "checkpoint", "checkpoint_every"};
const std::vector<std::string> kFlags{"spm", "tpm", "residual"};

std::vector<std::string> join(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> specs{
      {Command::kTrainImage, "train-image", "train the rate-conditioned auto-encoder",
       join({{"output", "latent_channels", "hidden_channels", "hyper_channels", "stages", "lambdas"}, kData, kTrain}),
       cmd_train_image},
      {Command::kTrainStem, "train-stem", "train the entropy model against a frozen auto-encoder",
       join({{"output", "weights", "clip_frames"}, kData, kTrain, kFlags}), cmd_train_stem},
      {Command::kCompress, "compress", "encode raw RGB video",
       join({{"input", "width", "height", "frames", "output", "weights", "stem", "gop_size", "rate_index"}, kFlags}),
       cmd_compress},
      {Command::kDecompress, "decompress", "decode a stream to raw RGB video",
       {"input", "output", "weights", "stem"}, cmd_decompress},
      {Command::kEval, "eval", "per-frame bits and quality as CSV",
       {"input", "reference", "output", "weights", "stem"}, cmd_eval},
      {Command::kAblate, "ablate", "compare entropy-model variants against intra-only coding",
       join({{"output", "weights", "stems", "gop_size", "rate_index"}, kData}), cmd_ablate},
      {Command::kHeatmap, "heatmap", "per-pixel bits of a predicted frame (CSV and PGM)",
       join({{"output", "weights", "stem", "frame", "rate_index"}, kData, kFlags}), cmd_heatmap},
      {Command::kSynth, "synth", "write a synthetic raw RGB sequence",
       {"output", "synthetic", "frames", "width", "height", "synth_shift", "seed"}, cmd_synth},
  };
  return specs;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& s : key_specs()) k.push_back(s.key);
    return k;
  }();
  return keys;
}

void apply_setting(CliConfig& cfg, const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  spec->set(cfg, key, value);
}

CliConfig parse_config(const std::string& text, const std::string& source) {
  CliConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

CliConfig load_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion-free learned video codec"};
  app.name("mfvc");
  app.require_subcommand(1);

  struct Bound {
    const CommandSpec* spec;
    CLI::App* app;
    std::string config;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;
  };
  std::vector<Bound> bound(commands().size());
  for (std::size_t i = 0; i < commands().size(); ++i) {
    Bound& b = bound[i];
    b.spec = &commands()[i];
    b.app = app.add_subcommand(b.spec->name, b.spec->help);
    b.app->add_option("--config", b.config, "key = value settings file; flags override it");
    for (const auto& key : b.spec->keys) {
      b.options.emplace_back(key, b.app->add_option("--" + dashed(key), b.values[key], find_key(key)->help));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  for (Bound& b : bound) {
    if (!b.app->parsed()) continue;
    try {
      CliConfig cfg = b.config.empty() ? CliConfig{} : load_config(b.config);
      cfg.command = b.spec->command;
      for (const auto& [key, opt] : b.options)
        if (opt->count() > 0) apply_setting(cfg, key, b.values[key]);
      return b.spec->fn(cfg, out);
    } catch (const ConfigError& e) {
      err << "mfvc " << b.spec->name << ": " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "mfvc " << b.spec->name << ": " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace mfvc
