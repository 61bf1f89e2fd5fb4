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

#include "mfvc/weights.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "mfvc/bytes.hpp"
#include "mfvc/error.hpp"

namespace mfvc {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string digest_hex(const Digest& d) {
  std::string s;
  char buf[3];
  for (auto b : d) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    s += buf;
  }
  return s;
}

namespace {

Digest to_digest(std::uint64_t h) {
  Digest d;
  for (int i = 0; i < 8; ++i) d[i] = static_cast<std::uint8_t>(h >> (8 * i));
  return d;
}

}  // namespace

void WeightsFile::put(std::string name, Tensor<float> value) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  if (it != entries_.end()) {
    it->value = std::move(value);
  } else {
    entries_.push_back({std::move(name), std::move(value)});
  }
}

bool WeightsFile::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Tensor<float>& WeightsFile::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ConfigError("weights: missing tensor '" + name + "'");
}

std::vector<std::uint8_t> WeightsFile::serialize() const {
  ByteWriter w;
  w.text("MFVCW");
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.text(e.name);
    const Shape s = e.value.shape();
    for (int v : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(v));
    for (std::size_t i = 0; i < e.value.size(); ++i) w.f32(e.value[i]);
  }
  return w.take();
}

WeightsFile WeightsFile::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "weights file");
  if (r.text(5) != "MFVCW") throw CorruptStreamError("weights file: bad magic");
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw CorruptStreamError("weights file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  WeightsFile f;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.text(len);
    std::uint32_t ext[4];
    std::uint64_t total = 1;
    for (auto& e : ext) {
      e = r.u32();
      total *= e;
    }
    if (total * 4 > r.remaining()) throw CorruptStreamError("weights file: tensor '" + name + "' truncated");
    Tensor<float> t(Shape{static_cast<int>(ext[0]), static_cast<int>(ext[1]), static_cast<int>(ext[2]),
                          static_cast<int>(ext[3])});
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = r.f32();
    f.put(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CorruptStreamError("weights file: trailing bytes");
  return f;
}

void WeightsFile::save(const std::string& path) const { write_file(path, serialize()); }

WeightsFile WeightsFile::load(const std::string& path) { return parse(read_file(path)); }

Digest WeightsFile::digest() const { return to_digest(fnv1a64(serialize())); }

Digest combined_digest(const WeightsFile& a, const WeightsFile& b) {
  return to_digest(fnv1a64(b.serialize(), fnv1a64(a.serialize())));
}

}  // namespace mfvc
