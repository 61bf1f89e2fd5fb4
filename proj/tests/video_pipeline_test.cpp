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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "mfvc/bytes.hpp"
#include "mfvc/error.hpp"
#include "mfvc/video.hpp"

namespace mfvc {
namespace {

CodecModels micro_models(std::uint64_t seed) {
  ImageCodecConfig ic;
  ic.latent_channels = 6;
  ic.hidden_channels = 8;
  ic.hyper_channels = 5;
  ic.lambdas = {10.0, 100.0};
  StemConfig sc;
  sc.latent_channels = 6;
  sc.hyper_channels = 5;
  sc.tpm_channels = {6, 7, 8};
  sc.spm_channels = 8;
  sc.epm_channels = {10, 10};
  return CodecModels::from(init_autoencoder<float>(ic, seed), init_stem<float>(sc, seed + 1));
}

const CodecModels& models() {
  static const CodecModels m = micro_models(11);
  return m;
}

std::vector<Frame> clip(int frames = 7) { return synth_sequence(SynthKind::kTranslate, frames, 18, 22, 5); }

bool equal(const Frame& a, const Frame& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool on_8bit_grid(const Frame& f) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double v = f[i] * 255.0;
    if (std::fabs(v - std::round(v)) > 1e-3 || f[i] < 0.0f || f[i] > 1.0f) return false;
  }
  return true;
}

TEST(GopSchedule, IntraEveryGop) {
  const auto s = gop_schedule(7, 3);
  const std::vector<FrameType> want{FrameType::kIntra,     FrameType::kPredicted, FrameType::kPredicted,
                                    FrameType::kIntra,     FrameType::kPredicted, FrameType::kPredicted,
                                    FrameType::kIntra};
  EXPECT_EQ(s, want);
  for (auto t : gop_schedule(4, 1)) EXPECT_EQ(t, FrameType::kIntra);
  EXPECT_THROW(gop_schedule(3, 0), ConfigError);
  EXPECT_THROW(gop_schedule(0, 3), ConfigError);
}

TEST(Synth, TranslateShiftsContentExactly) {
  SynthOptions o;
  o.shift_x = 3;
  o.shift_y = -1;
  const auto f = synth_sequence(SynthKind::kTranslate, 4, 10, 12, 9, o);
  for (int t = 0; t + 1 < 4; ++t)
    for (int c = 0; c < 3; ++c)
      for (int y = 1; y < 10; ++y)
        for (int x = 0; x + 3 < 12; ++x) ASSERT_EQ(f[t + 1](0, c, y, x), f[t](0, c, y - 1, x + 3));
}

TEST(Synth, DeterministicAndOnEightBitGrid) {
  for (auto kind : {SynthKind::kTranslate, SynthKind::kZoom, SynthKind::kNoiseStatic}) {
    const auto a = synth_sequence(kind, 3, 12, 16, 4), b = synth_sequence(kind, 3, 12, 16, 4);
    ASSERT_EQ(a.size(), 3u);
    for (int t = 0; t < 3; ++t) {
      EXPECT_TRUE(equal(a[t], b[t]));
      EXPECT_TRUE(on_8bit_grid(a[t]));
    }
    EXPECT_FALSE(equal(a[0], a[1]));
  }
  EXPECT_FALSE(equal(synth_texture(8, 8, 1), synth_texture(8, 8, 2)));
  EXPECT_EQ(parse_synth_kind("zoom"), SynthKind::kZoom);
  EXPECT_THROW(parse_synth_kind("pan"), ConfigError);
}

TEST(Synth, TextureHasStructure) {
  const Frame f = synth_texture(32, 32, 3);
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < f.size(); ++i) mean += f[i];
  mean /= f.size();
  for (std::size_t i = 0; i < f.size(); ++i) var += (f[i] - mean) * (f[i] - mean);
  EXPECT_GT(std::sqrt(var / f.size()), 0.05);
}

TEST(Padding, ReplicatesEdgesAndCropsBack) {
  const Frame f = synth_texture(5, 7, 1);
  const Frame p = pad_frame(f, 4);
  EXPECT_EQ(p.height(), 8);
  EXPECT_EQ(p.width(), 8);
  EXPECT_EQ(p(0, 1, 7, 7), f(0, 1, 4, 6));
  EXPECT_EQ(p(0, 2, 6, 3), f(0, 2, 4, 3));
  EXPECT_TRUE(equal(crop_frame(p, 5, 7), f));
  EXPECT_EQ(padded_extent(16, 4), 16);
  EXPECT_EQ(padded_extent(17, 4), 20);
  EXPECT_THROW(crop_frame(f, 6, 7), ShapeError);
}

TEST(RawVideo, RoundTripsAndRejectsPartialFrames) {
  const auto dir = std::filesystem::temp_directory_path() / "mfvc_video_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "clip.rgb").string();
  const auto frames = synth_sequence(SynthKind::kZoom, 3, 6, 10, 2);
  write_raw_video(path, frames);
  EXPECT_EQ(std::filesystem::file_size(path), 3u * 3 * 6 * 10);
  const auto back = read_raw_video(path, 10, 6);
  ASSERT_EQ(back.size(), 3u);
  for (int t = 0; t < 3; ++t) EXPECT_TRUE(equal(back[t], frames[t]));
  EXPECT_THROW(read_raw_video(path, 7, 6), IoError);
  EXPECT_THROW(read_raw_video((dir / "missing.rgb").string(), 10, 6), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Container, HeaderIsFixedSizeAndRoundTrips) {
  VideoHeader h;
  h.width = 1920;
  h.height = 1080;
  h.frame_count = 300;
  h.gop_size = 12;
  h.rate_index = 2;
  h.latent_channels = 32;
  h.factor = 4;
  h.flags = StemFlags{false, true, true}.bits();
  h.model_digest = {1, 2, 3, 4, 5, 6, 7, 8};
  ByteWriter w;
  h.write(w);
  const auto bytes = w.take();
  EXPECT_EQ(bytes.size(), VideoHeader::kBytes);
  ByteReader r(bytes, "header");
  EXPECT_EQ(VideoHeader::read(r), h);
  auto bad = bytes;
  bad[0] = 'X';
  ByteReader rb(bad, "header");
  EXPECT_THROW(VideoHeader::read(rb), CorruptStreamError);
}

TEST(VideoCodec, RoundTripMatchesEncoderLatents) {
  const auto frames = clip();
  GopConfig cfg;
  cfg.gop_size = 3;
  cfg.rate_index = 1;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  const auto bytes = enc.stream.serialize();
  VideoDecoder dec(bytes, models());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    auto f = dec.next();
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->latent, enc.latents[t]) << "frame " << t;
    EXPECT_EQ(f->type, enc.stats[t].type);
    EXPECT_EQ(f->frame.height(), 18);
    EXPECT_EQ(f->frame.width(), 22);
  }
  EXPECT_FALSE(dec.next().has_value());
  EXPECT_EQ(decompress_video(bytes, models()).size(), frames.size());
}

TEST(VideoCodec, IntraFramesMatchStandaloneImageDecoding) {
  const auto frames = clip();
  GopConfig cfg;
  cfg.gop_size = 3;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  const auto decoded = decompress_video(enc.stream.serialize(), models());
  const RateIndex rate = rate_index(models().ae.config, 0);
  for (int t : {0, 3, 6}) {
    const Frame padded = pad_frame(frames[t], 4);
    const IFrameResult alone = compress_iframe(padded, rate, models().ae);
    EXPECT_EQ(alone.chunk, enc.stream.chunks[t]);
    const DecodedFrame d = decompress_iframe(alone.chunk, rate, padded.height(), padded.width(), models().ae);
    EXPECT_TRUE(equal(crop_frame(d.frame, 18, 22), decoded[t])) << "frame " << t;
  }
}

TEST(VideoCodec, DeterministicBytes) {
  const auto frames = clip(5);
  GopConfig cfg;
  cfg.gop_size = 4;
  EXPECT_EQ(compress_video(frames, models(), cfg).stream.serialize(),
            compress_video(frames, models(), cfg).stream.serialize());
}

TEST(VideoCodec, ByteAccountingAddsUp) {
  const auto frames = clip(5);
  GopConfig cfg;
  cfg.gop_size = 2;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  const auto bytes = enc.stream.serialize();
  std::size_t sum = VideoHeader::kBytes;
  for (const auto& s : enc.stats) sum += s.bytes;
  EXPECT_EQ(bytes.size(), sum);
  EXPECT_EQ(enc.stream.total_bytes(), sum);
  const VideoBitstream parsed = VideoBitstream::parse(bytes);
  EXPECT_EQ(parsed.header, enc.stream.header);
  EXPECT_EQ(parsed.chunks, enc.stream.chunks);
  for (std::size_t t = 0; t < enc.stats.size(); ++t) {
    const double actual = 8.0 * (enc.stream.chunks[t].z_stream.size() + enc.stream.chunks[t].y_stream.size());
    EXPECT_LT(std::fabs(actual - enc.stats[t].estimated_bits), 0.02 * actual + 128) << "frame " << t;
  }
}

TEST(VideoCodec, DigestMismatchIsRejected) {
  const auto frames = clip(2);
  const auto bytes = compress_video(frames, models(), {}).stream.serialize();
  const CodecModels other = micro_models(99);
  EXPECT_THROW(VideoDecoder(bytes, other), DigestMismatchError);
  auto weights = models().stem;
  const CodecModels ablated = CodecModels::from(models().ae, weights, StemFlags{false, true, true});
  EXPECT_THROW(decompress_video(bytes, ablated), DigestMismatchError);
}

TEST(VideoCodec, TruncationNamesTheChunk) {
  const auto frames = clip(4);
  GopConfig cfg;
  cfg.gop_size = 4;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  auto bytes = enc.stream.serialize();
  bytes.resize(bytes.size() - 3);
  VideoDecoder dec(bytes, models());
  for (int t = 0; t < 3; ++t) ASSERT_TRUE(dec.next().has_value());
  try {
    dec.next();
    FAIL() << "expected a corrupt stream error";
  } catch (const CorruptStreamError& e) {
    EXPECT_NE(std::string(e.what()).find("chunk 3"), std::string::npos) << e.what();
  }
  auto extra = enc.stream.serialize();
  extra.push_back(0);
  EXPECT_THROW(decompress_video(extra, models()), CorruptStreamError);
}

TEST(VideoCodec, CorruptionDoesNotReachEarlierFrames) {
  const auto frames = clip(7);
  GopConfig cfg;
  cfg.gop_size = 7;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  const auto clean = decompress_video(enc.stream.serialize(), models());
  auto bytes = enc.stream.serialize();
  std::size_t off = VideoHeader::kBytes;
  for (int t = 0; t < 5; ++t) off += enc.stats[t].bytes;
  for (std::size_t i = off + 9; i < off + enc.stats[5].bytes; ++i) bytes[i] ^= 0x5a;
  VideoDecoder dec(bytes, models());
  for (int t = 0; t < 5; ++t) {
    auto f = dec.next();
    ASSERT_TRUE(f.has_value());
    EXPECT_TRUE(equal(f->frame, clean[t])) << "frame " << t;
  }
}

TEST(VideoCodec, DecodesIncrementallyFromAPrefix) {
  const auto frames = clip(5);
  GopConfig cfg;
  cfg.gop_size = 5;
  const EncodedVideo enc = compress_video(frames, models(), cfg);
  const auto bytes = enc.stream.serialize();
  std::size_t prefix = VideoHeader::kBytes + enc.stats[0].bytes + enc.stats[1].bytes;
  const std::span<const std::uint8_t> view(bytes.data(), prefix);
  VideoDecoder dec(view, models());
  EXPECT_TRUE(dec.next().has_value());
  EXPECT_TRUE(dec.next().has_value());
  EXPECT_EQ(dec.frames_decoded(), 2u);
  EXPECT_THROW(dec.next(), CorruptStreamError);
}

TEST(VideoCodec, RejectsBadInput) {
  auto frames = clip(3);
  frames[2] = synth_texture(18, 20, 1);
  EXPECT_THROW(compress_video(frames, models(), {}), ShapeError);
  EXPECT_THROW(compress_video({}, models(), {}), ConfigError);
  GopConfig cfg;
  cfg.rate_index = 5;
  EXPECT_THROW(compress_video(clip(2), models(), cfg), ConfigError);
  cfg.rate_index = 0;
  cfg.gop_size = 300;
  EXPECT_THROW(compress_video(clip(2), models(), cfg), ConfigError);
}

}  // namespace
}  // namespace mfvc
