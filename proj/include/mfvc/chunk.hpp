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
#include <vector>

#include "mfvc/bytes.hpp"

namespace mfvc {

enum class FrameType : std::uint8_t { kIntra = 0, kPredicted = 1 };

// One coded frame: hyper-latent stream then latent stream. On disk a type
// byte and two u32 lengths precede the payloads.
struct FrameChunk {
  static constexpr std::size_t kHeaderBytes = 9;

  FrameType type = FrameType::kIntra;
  std::vector<std::uint8_t> z_stream;
  std::vector<std::uint8_t> y_stream;

  std::size_t byte_size() const { return kHeaderBytes + z_stream.size() + y_stream.size(); }
  bool operator==(const FrameChunk&) const = default;
};

inline void write_chunk(ByteWriter& w, const FrameChunk& c) {
  w.u8(static_cast<std::uint8_t>(c.type));
  w.u32(static_cast<std::uint32_t>(c.z_stream.size()));
  w.u32(static_cast<std::uint32_t>(c.y_stream.size()));
  w.bytes(c.z_stream);
  w.bytes(c.y_stream);
}

inline FrameChunk read_chunk(ByteReader& r) {
  FrameChunk c;
  const std::uint8_t type = r.u8();
  if (type > 1) throw CorruptStreamError("frame chunk: unknown frame type " + std::to_string(type));
  c.type = static_cast<FrameType>(type);
  const std::uint32_t z_len = r.u32();
  const std::uint32_t y_len = r.u32();
  auto z = r.take(z_len);
  c.z_stream.assign(z.begin(), z.end());
  auto y = r.take(y_len);
  c.y_stream.assign(y.begin(), y.end());
  return c;
}

}  // namespace mfvc
