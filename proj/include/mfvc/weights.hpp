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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfvc/tensor.hpp"

namespace mfvc {

using Digest = std::array<std::uint8_t, 8>;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string digest_hex(const Digest& d);

// Ordered collection of named f32 tensors. On disk: "MFVCW", a version byte,
// a u32 tensor count, then per tensor a u32 name length, the name, four u32
// extents and the little-endian f32 payload.
class WeightsFile {
 public:
  static constexpr std::uint8_t kVersion = 1;

  struct Entry {
    std::string name;
    Tensor<float> value;
  };

  void put(std::string name, Tensor<float> value);
  bool contains(const std::string& name) const;
  // Throws ConfigError when missing.
  const Tensor<float>& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static WeightsFile parse(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static WeightsFile load(const std::string& path);

  // FNV-1a over the serialized form.
  Digest digest() const;

 private:
  std::vector<Entry> entries_;
};

// Model digest for a container: both weight sets, in order.
Digest combined_digest(const WeightsFile& a, const WeightsFile& b);

}  // namespace mfvc
