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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mfvc {

enum class Command { kNone, kTrainImage, kTrainStem, kCompress, kDecompress, kEval, kAblate, kHeatmap, kSynth };

// Everything a command can be told. Files use the same key names as the
// command-line options, with underscores for dashes.
struct CliConfig {
  Command command = Command::kNone;

  std::string input;
  std::string output;
  std::string reference;             // raw original, for eval
  std::string weights;               // auto-encoder
  std::string stem;                  // entropy model
  std::vector<std::string> stems;    // entropy models compared by ablate
  int width = 0;
  int height = 0;
  int frames = 0;                    // 0 reads every frame
  int frame = 1;                     // heatmap target
  int gop_size = 12;
  int rate_index = 0;
  std::optional<bool> spm;           // unset: use the entropy model's own flags
  std::optional<bool> tpm;
  std::optional<bool> residual;
  std::uint64_t seed = 1;

  int latent_channels = 32;
  int hidden_channels = 48;
  int hyper_channels = 24;
  int stages = 2;

  std::vector<double> lambdas{64.0, 256.0, 1024.0};
  int batch_size = 8;
  int patch_h = 64;
  int patch_w = 64;
  std::vector<double> lr_values{1e-3, 3e-4, 1e-4};
  std::vector<int> lr_boundaries{6000, 9000};
  int iters = 10000;
  std::string distortion = "mse";
  std::string log;
  std::string checkpoint;
  int checkpoint_every = 0;
  int clip_frames = 7;

  std::string synthetic = "translate";  // used when no input is given
  int synth_count = 64;
  int synth_size = 96;
  int synth_shift = 2;
};

// Known configuration keys, in a stable order.
const std::vector<std::string>& config_keys();
// Throws ConfigError for unknown keys and malformed values.
void apply_setting(CliConfig& cfg, const std::string& key, const std::string& value);
// `key = value` lines, `#` starts a comment. Errors carry the line number.
CliConfig parse_config(const std::string& text, const std::string& source = "config");
CliConfig load_config(const std::string& path);

// Exit status: 0 success, 1 runtime failure (I/O, digest, corrupt data),
// 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfvc
