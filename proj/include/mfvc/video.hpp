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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfvc/chunk.hpp"
#include "mfvc/image_codec.hpp"
#include "mfvc/stem.hpp"
#include "mfvc/weights.hpp"

namespace mfvc {

// Frames are (1, 3, H, W) tensors in [0, 1].
using Frame = Tensor<float>;

// ---------------------------------------------------------------------------
// Synthetic sequences

enum class SynthKind { kTranslate, kZoom, kNoiseStatic };
SynthKind parse_synth_kind(const std::string& name);

struct SynthOptions {
  int shift_x = 2;  // pixels per frame, translate only
  int shift_y = 0;
  double zoom_per_frame = 0.02;
  double noise_sigma = 0.03;
};

// Colored texture of gratings, blobs and hard-edged shapes, quantized to
// 8-bit levels.
Frame synth_texture(int height, int width, std::uint64_t seed);
std::vector<Frame> synth_sequence(SynthKind kind, int frames, int height, int width, std::uint64_t seed,
                                  const SynthOptions& options = {});

// Training sets: textures for the auto-encoder and translating clips (one
// random integer velocity in [-max_shift, max_shift]^2 per clip) for the
// entropy model.
std::vector<Frame> synthetic_image_pool(int count, int size, std::uint64_t seed);
std::vector<std::vector<Frame>> synthetic_clips(int count, int frames, int size, int max_shift, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Raw 8-bit RGB, interleaved, frame after frame.

std::vector<Frame> read_raw_video(const std::string& path, int width, int height);
void write_raw_video(const std::string& path, const std::vector<Frame>& frames);
Frame quantize_frame_8bit(const Frame& frame);

// Edge replication up to the next multiple of `factor`, and its inverse.
Frame pad_frame(const Frame& frame, int factor);
Frame crop_frame(const Frame& frame, int height, int width);
int padded_extent(int pixels, int factor);

// ---------------------------------------------------------------------------
// Container

std::vector<FrameType> gop_schedule(int frame_count, int gop_size);

struct GopConfig {
  int gop_size = 10;
  int rate_index = 0;
  StemFlags flags;
};

struct VideoHeader {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kBytes = 31;

  std::uint8_t version = kVersion;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t frame_count = 0;
  std::uint8_t gop_size = 1;
  std::uint8_t rate_index = 0;
  std::uint16_t latent_channels = 0;
  std::uint8_t factor = 1;
  std::uint8_t flags = 0;
  Digest model_digest{};

  void write(ByteWriter& w) const;
  static VideoHeader read(ByteReader& r);
  bool operator==(const VideoHeader&) const = default;
};

struct VideoBitstream {
  VideoHeader header;
  std::vector<FrameChunk> chunks;

  std::vector<std::uint8_t> serialize() const;
  static VideoBitstream parse(std::span<const std::uint8_t> bytes);
  std::size_t total_bytes() const;
};

// Auto-encoder plus entropy model, with the digest the container records.
struct CodecModels {
  AutoencoderWeights<float> ae;
  StemWeights<float> stem;
  StemFlags trained_flags;
  Digest digest{};

  static CodecModels from(AutoencoderWeights<float> ae, StemWeights<float> stem, StemFlags trained_flags = {});
  static CodecModels load(const std::string& ae_path, const std::string& stem_path);
};

struct FrameStats {
  FrameType type = FrameType::kIntra;
  std::size_t bytes = 0;  // chunk bytes including its 9-byte framing
  double estimated_bits = 0;
};

struct EncodedVideo {
  VideoBitstream stream;
  std::vector<LatentPlane> latents;
  std::vector<FrameStats> stats;
};

EncodedVideo compress_video(const std::vector<Frame>& frames, const CodecModels& models, const GopConfig& cfg);

struct DecodedVideoFrame {
  Frame frame;  // cropped to the original size
  LatentPlane latent;
  FrameType type = FrameType::kIntra;
};

// Decodes one chunk at a time from a serialized container.
class VideoDecoder {
 public:
  // Throws DigestMismatchError when the stream was made with other weights.
  VideoDecoder(std::span<const std::uint8_t> bytes, const CodecModels& models);

  const VideoHeader& header() const { return header_; }
  std::size_t frames_decoded() const { return index_; }
  // nullopt after the last frame. Errors name the failing chunk index.
  std::optional<DecodedVideoFrame> next();

 private:
  std::span<const std::uint8_t> bytes_;
  const CodecModels& models_;
  VideoHeader header_;
  std::size_t offset_ = 0;
  std::size_t index_ = 0;
  LatentPlane previous_;
};

std::vector<Frame> decompress_video(std::span<const std::uint8_t> bytes, const CodecModels& models);

}  // namespace mfvc
