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

#include "mfvc/video.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mfvc/bytes.hpp"
#include "mfvc/error.hpp"

namespace mfvc {
namespace {

float to_8bit_level(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
}

void check_frame_shape(const Frame& f) {
  if (f.batch() != 1 || f.channels() != 3 || f.height() < 1 || f.width() < 1) {
    throw ShapeError("expected a (1, 3, H, W) frame, got " + f.shape().str());
  }
}

// Bilinear sample with edge clamping.
float sample(const Frame& f, int c, double y, double x) {
  const int h = f.height(), w = f.width();
  y = std::clamp(y, 0.0, h - 1.0);
  x = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  return static_cast<float>((1 - fy) * ((1 - fx) * f(0, c, y0, x0) + fx * f(0, c, y0, x1)) +
                            fy * ((1 - fx) * f(0, c, y1, x0) + fx * f(0, c, y1, x1)));
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "translate") return SynthKind::kTranslate;
  if (name == "zoom") return SynthKind::kZoom;
  if (name == "noise_static") return SynthKind::kNoiseStatic;
  throw ConfigError("unknown synthetic sequence kind '" + name + "' (translate, zoom, noise_static)");
}

Frame synth_texture(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw ConfigError("synth_texture: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  std::vector<double> img(static_cast<std::size_t>(3) * height * width);
  auto px = [&](int c, int y, int x) -> double& {
    return img[(static_cast<std::size_t>(c) * height + y) * width + x];
  };

  for (int c = 0; c < 3; ++c) {
    const double a0 = range(0.3, 0.7), gx = range(-0.2, 0.2), gy = range(-0.2, 0.2);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) px(c, y, x) = a0 + gx * x / width + gy * y / height;
  }
  for (int g = 0; g < 4; ++g) {
    const double freq = range(0.02, 0.15) * 2 * std::numbers::pi, theta = range(0, std::numbers::pi);
    const double phase = range(0, 2 * std::numbers::pi), ct = std::cos(theta), st = std::sin(theta);
    double amp[3];
    for (double& a : amp) a = range(-0.1, 0.1);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double s = std::sin(freq * (ct * x + st * y) + phase);
        for (int c = 0; c < 3; ++c) px(c, y, x) += amp[c] * s;
      }
  }
  const double scale = std::min(height, width);
  for (int b = 0; b < 6; ++b) {
    const double cy = range(0, height), cx = range(0, width), r = range(0.05, 0.25) * scale;
    double col[3];
    for (double& v : col) v = range(-0.3, 0.3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
        const double g = std::exp(-0.5 * d2);
        for (int c = 0; c < 3; ++c) px(c, y, x) += col[c] * g;
      }
  }
  for (int s = 0; s < 6; ++s) {
    const bool disc = u(rng) < 0.5;
    const double cy = range(0, height), cx = range(0, width);
    const double ry = range(0.05, 0.2) * scale, rx = range(0.05, 0.2) * scale;
    double col[3];
    for (double& v : col) v = range(0.0, 1.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::fabs(dy) <= 1.0 && std::fabs(dx) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) px(c, y, x) = 0.3 * px(c, y, x) + 0.7 * col[c];
      }
  }
  Frame out(Shape{1, 3, height, width});
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = to_8bit_level(img[i]);
  return out;
}

std::vector<Frame> synth_sequence(SynthKind kind, int frames, int height, int width, std::uint64_t seed,
                                  const SynthOptions& options) {
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("synth_sequence: dimensions must be positive");
  std::vector<Frame> out;
  out.reserve(static_cast<std::size_t>(frames));
  switch (kind) {
    case SynthKind::kTranslate: {
      const int sx = options.shift_x, sy = options.shift_y;
      const int ch = height + std::abs(sy) * (frames - 1), cw = width + std::abs(sx) * (frames - 1);
      const Frame canvas = synth_texture(ch, cw, seed);
      for (int t = 0; t < frames; ++t) {
        // Frame t + 1 shows the content of frame t moved by (-sy, -sx).
        const int y0 = sy >= 0 ? t * sy : (frames - 1 - t) * -sy;
        const int x0 = sx >= 0 ? t * sx : (frames - 1 - t) * -sx;
        Frame f(Shape{1, 3, height, width});
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) f(0, c, y, x) = canvas(0, c, y0 + y, x0 + x);
        out.push_back(std::move(f));
      }
      break;
    }
    case SynthKind::kZoom: {
      const Frame canvas = synth_texture(2 * height, 2 * width, seed);
      for (int t = 0; t < frames; ++t) {
        const double s = 1.0 + options.zoom_per_frame * t;
        Frame f(Shape{1, 3, height, width});
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
              const double sy = height + (y + 0.5 - height / 2.0) / s - 0.5;
              const double sx = width + (x + 0.5 - width / 2.0) / s - 0.5;
              f(0, c, y, x) = to_8bit_level(sample(canvas, c, sy, sx));
            }
        out.push_back(std::move(f));
      }
      break;
    }
    case SynthKind::kNoiseStatic: {
      const Frame base = synth_texture(height, width, seed);
      for (int t = 0; t < frames; ++t) {
        std::mt19937_64 rng(seed ^ (0x5bd1e995ull * static_cast<std::uint64_t>(t + 1)));
        std::normal_distribution<double> noise(0.0, options.noise_sigma);
        Frame f(base.shape());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = to_8bit_level(base[i] + noise(rng));
        out.push_back(std::move(f));
      }
      break;
    }
  }
  return out;
}

std::vector<Frame> synthetic_image_pool(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ConfigError("synthetic pool: count must be positive");
  std::vector<Frame> pool;
  for (int i = 0; i < count; ++i) pool.push_back(synth_texture(size, size, seed * 7919 + static_cast<std::uint64_t>(i)));
  return pool;
}

std::vector<std::vector<Frame>> synthetic_clips(int count, int frames, int size, int max_shift, std::uint64_t seed) {
  if (count < 1) throw ConfigError("synthetic clips: count must be positive");
  if (max_shift < 0) throw ConfigError("synthetic clips: max_shift must be non-negative");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Frame>> clips;
  for (int i = 0; i < count; ++i) {
    SynthOptions o;
    o.shift_x = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * max_shift + 1)) - max_shift;
    o.shift_y = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * max_shift + 1)) - max_shift;
    clips.push_back(synth_sequence(SynthKind::kTranslate, frames, size, size, rng(), o));
  }
  return clips;
}

Frame quantize_frame_8bit(const Frame& frame) {
  Frame out(frame.shape());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = to_8bit_level(frame[i]);
  return out;
}

std::vector<Frame> read_raw_video(const std::string& path, int width, int height) {
  if (width < 1 || height < 1) throw ConfigError("raw video: width and height must be positive");
  const auto bytes = read_file(path);
  const std::size_t frame_bytes = static_cast<std::size_t>(3) * width * height;
  if (bytes.empty() || bytes.size() % frame_bytes != 0) {
    throw IoError(path + ": size " + std::to_string(bytes.size()) + " is not a whole number of " +
                  std::to_string(width) + "x" + std::to_string(height) + " RGB frames");
  }
  std::vector<Frame> frames;
  for (std::size_t off = 0; off < bytes.size(); off += frame_bytes) {
    Frame f(Shape{1, 3, height, width});
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) {
          const std::size_t i = off + (static_cast<std::size_t>(y) * width + x) * 3 + c;
          f(0, c, y, x) = static_cast<float>(bytes[i] / 255.0);
        }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_raw_video(const std::string& path, const std::vector<Frame>& frames) {
  std::vector<std::uint8_t> bytes;
  for (const Frame& f : frames) {
    check_frame_shape(f);
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        for (int c = 0; c < 3; ++c) {
          bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(f(0, c, y, x), 0.0f, 1.0f) * 255.0f)));
        }
  }
  write_file(path, bytes);
}

int padded_extent(int pixels, int factor) { return (pixels + factor - 1) / factor * factor; }

Frame pad_frame(const Frame& frame, int factor) {
  check_frame_shape(frame);
  const int h = frame.height(), w = frame.width();
  const int ph = padded_extent(h, factor), pw = padded_extent(w, factor);
  if (ph == h && pw == w) return frame;
  Frame out(Shape{1, 3, ph, pw});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) out(0, c, y, x) = frame(0, c, std::min(y, h - 1), std::min(x, w - 1));
  return out;
}

Frame crop_frame(const Frame& frame, int height, int width) {
  if (height > frame.height() || width > frame.width()) throw ShapeError("crop_frame: crop larger than frame");
  if (height == frame.height() && width == frame.width()) return frame;
  Frame out(Shape{1, 3, height, width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out(0, c, y, x) = frame(0, c, y, x);
  return out;
}

std::vector<FrameType> gop_schedule(int frame_count, int gop_size) {
  if (frame_count < 1) throw ConfigError("gop_schedule: need at least one frame");
  if (gop_size < 1) throw ConfigError("gop_schedule: GOP size must be at least 1");
  std::vector<FrameType> types;
  for (int t = 0; t < frame_count; ++t) types.push_back(t % gop_size == 0 ? FrameType::kIntra : FrameType::kPredicted);
  return types;
}

void VideoHeader::write(ByteWriter& w) const {
  w.text("MFVC");
  w.u8(version);
  w.u32(width);
  w.u32(height);
  w.u32(frame_count);
  w.u8(gop_size);
  w.u8(rate_index);
  w.u16(latent_channels);
  w.u8(factor);
  w.u8(flags);
  w.bytes(model_digest);
}

VideoHeader VideoHeader::read(ByteReader& r) {
  if (r.text(4) != "MFVC") throw CorruptStreamError("container: bad magic");
  VideoHeader h;
  h.version = r.u8();
  if (h.version != kVersion) throw CorruptStreamError("container: unsupported version " + std::to_string(h.version));
  h.width = r.u32();
  h.height = r.u32();
  h.frame_count = r.u32();
  h.gop_size = r.u8();
  h.rate_index = r.u8();
  h.latent_channels = r.u16();
  h.factor = r.u8();
  h.flags = r.u8();
  auto d = r.take(8);
  std::copy(d.begin(), d.end(), h.model_digest.begin());
  if (h.width == 0 || h.height == 0 || h.frame_count == 0 || h.gop_size == 0 || h.factor == 0) {
    throw CorruptStreamError("container: header has a zero field");
  }
  StemFlags::from_bits(h.flags);
  return h;
}

std::vector<std::uint8_t> VideoBitstream::serialize() const {
  ByteWriter w;
  header.write(w);
  for (const auto& c : chunks) write_chunk(w, c);
  return w.take();
}

VideoBitstream VideoBitstream::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "container");
  VideoBitstream s;
  s.header = VideoHeader::read(r);
  for (std::uint32_t i = 0; i < s.header.frame_count; ++i) {
    ByteReader cr(bytes.subspan(r.position()), "chunk " + std::to_string(i));
    s.chunks.push_back(read_chunk(cr));
    r.take(cr.position());
  }
  if (r.remaining() != 0) throw CorruptStreamError("container: trailing bytes after the last chunk");
  return s;
}

std::size_t VideoBitstream::total_bytes() const {
  std::size_t n = VideoHeader::kBytes;
  for (const auto& c : chunks) n += c.byte_size();
  return n;
}

CodecModels CodecModels::from(AutoencoderWeights<float> ae, StemWeights<float> stem, StemFlags trained_flags) {
  if (ae.config.latent_channels != stem.config.latent_channels) {
    throw ConfigError("auto-encoder has " + std::to_string(ae.config.latent_channels) +
                      " latent channels but the entropy model expects " +
                      std::to_string(stem.config.latent_channels));
  }
  CodecModels m{std::move(ae), std::move(stem), trained_flags, {}};
  m.ae.set_trainable(false);
  m.stem.set_trainable(false);
  m.digest = combined_digest(m.ae.to_file(), m.stem.to_file(trained_flags));
  return m;
}

CodecModels CodecModels::load(const std::string& ae_path, const std::string& stem_path) {
  const WeightsFile stem_file = WeightsFile::load(stem_path);
  return from(load_autoencoder(ae_path), stem_from_file<float>(stem_file), stem_trained_flags(stem_file));
}

EncodedVideo compress_video(const std::vector<Frame>& frames, const CodecModels& models, const GopConfig& cfg) {
  if (frames.empty()) throw ConfigError("compress_video: no frames");
  if (cfg.gop_size < 1 || cfg.gop_size > 255) throw ConfigError("compress_video: GOP size must be in [1, 255]");
  const RateIndex rate = rate_index(models.ae.config, cfg.rate_index);
  check_frame_shape(frames[0]);
  const int height = frames[0].height(), width = frames[0].width();
  const int factor = models.ae.config.factor();

  EncodedVideo out;
  VideoHeader& h = out.stream.header;
  h.width = static_cast<std::uint32_t>(width);
  h.height = static_cast<std::uint32_t>(height);
  h.frame_count = static_cast<std::uint32_t>(frames.size());
  h.gop_size = static_cast<std::uint8_t>(cfg.gop_size);
  h.rate_index = static_cast<std::uint8_t>(cfg.rate_index);
  h.latent_channels = static_cast<std::uint16_t>(models.ae.config.latent_channels);
  h.factor = static_cast<std::uint8_t>(factor);
  h.flags = cfg.flags.bits();
  h.model_digest = models.digest;

  const auto types = gop_schedule(static_cast<int>(frames.size()), cfg.gop_size);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    check_frame_shape(frames[t]);
    if (frames[t].height() != height || frames[t].width() != width) {
      throw ShapeError("compress_video: frame " + std::to_string(t) + " is " + std::to_string(frames[t].width()) +
                       "x" + std::to_string(frames[t].height()) + ", expected " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    const Frame padded = pad_frame(frames[t], factor);
    FrameStats st;
    st.type = types[t];
    if (types[t] == FrameType::kIntra) {
      IFrameResult r = compress_iframe(padded, rate, models.ae);
      st.estimated_bits = r.estimated_bits;
      out.stream.chunks.push_back(std::move(r.chunk));
      out.latents.push_back(std::move(r.latent));
    } else {
      LatentPlane y = quantize_round(analyze_frame(padded, rate, models.ae));
      const LatentPlane& prev = out.latents.back();
      const PFrameRate est = p_frame_rate(y, prev, cfg.flags, models.stem);
      st.estimated_bits = est.y_bits + est.z_bits;
      out.stream.chunks.push_back(encode_pframe(y, prev, cfg.flags, models.stem));
      out.latents.push_back(std::move(y));
    }
    st.bytes = out.stream.chunks.back().byte_size();
    out.stats.push_back(st);
  }
  return out;
}

VideoDecoder::VideoDecoder(std::span<const std::uint8_t> bytes, const CodecModels& models)
    : bytes_(bytes), models_(models) {
  ByteReader r(bytes, "container");
  header_ = VideoHeader::read(r);
  offset_ = r.position();
  if (header_.model_digest != models.digest) {
    throw DigestMismatchError("model digest mismatch: stream was encoded with " + digest_hex(header_.model_digest) +
                              ", loaded weights are " + digest_hex(models.digest));
  }
  const ImageCodecConfig& cfg = models.ae.config;
  if (header_.latent_channels != cfg.latent_channels || header_.factor != cfg.factor()) {
    throw CorruptStreamError("container: latent layout does not match the auto-encoder");
  }
  rate_index(cfg, header_.rate_index);
}

std::optional<DecodedVideoFrame> VideoDecoder::next() {
  if (index_ >= header_.frame_count) {
    if (offset_ != bytes_.size()) throw CorruptStreamError("container: trailing bytes after the last chunk");
    return std::nullopt;
  }
  const std::string label = "chunk " + std::to_string(index_);
  const int factor = header_.factor;
  const int ph = padded_extent(static_cast<int>(header_.height), factor);
  const int pw = padded_extent(static_cast<int>(header_.width), factor);
  const FrameType expected = index_ % header_.gop_size == 0 ? FrameType::kIntra : FrameType::kPredicted;
  const RateIndex rate = rate_index(models_.ae.config, header_.rate_index);
  try {
    ByteReader r(bytes_.subspan(offset_), label);
    const FrameChunk chunk = read_chunk(r);
    if (chunk.type != expected) throw CorruptStreamError("frame type disagrees with the GOP schedule");
    DecodedVideoFrame out;
    out.type = chunk.type;
    if (chunk.type == FrameType::kIntra) {
      out.latent = decode_iframe_latent(chunk, ph, pw, models_.ae);
    } else {
      out.latent = decode_pframe(chunk, previous_, StemFlags::from_bits(header_.flags), models_.stem);
    }
    out.frame = crop_frame(synthesize(out.latent, rate, models_.ae), static_cast<int>(header_.height),
                           static_cast<int>(header_.width));
    offset_ += r.position();
    previous_ = out.latent;
    ++index_;
    return out;
  } catch (const CorruptStreamError& e) {
    throw CorruptStreamError(label + ": " + e.what());
  }
}

std::vector<Frame> decompress_video(std::span<const std::uint8_t> bytes, const CodecModels& models) {
  VideoDecoder dec(bytes, models);
  std::vector<Frame> frames;
  while (auto f = dec.next()) frames.push_back(std::move(f->frame));
  return frames;
}

}  // namespace mfvc
