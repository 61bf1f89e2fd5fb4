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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfvc/cli.hpp"
#include "mfvc/error.hpp"

namespace mfvc {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mfvc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string expect_config_error(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error for: " << text;
  return "";
}

TEST(Config, EmptyFileGivesDefaults) {
  const CliConfig c = parse_config("");
  const CliConfig d;
  EXPECT_EQ(c.gop_size, d.gop_size);
  EXPECT_EQ(c.lambdas, d.lambdas);
  EXPECT_FALSE(c.spm.has_value());
  EXPECT_EQ(parse_config("# only a comment\n\n   \n").iters, d.iters);
}

TEST(Config, ParsesValues) {
  const CliConfig c = parse_config(
      "gop_size = 12\n"
      "lambdas = 50, 105,160   # three points\n"
      "spm=false\n"
      "lr_boundaries = 100,200\n"
      "input = clip.rgb\n"
      "seed = 18446744073709551615\n");
  EXPECT_EQ(c.gop_size, 12);
  EXPECT_EQ(c.lambdas, (std::vector<double>{50, 105, 160}));
  EXPECT_EQ(c.spm, std::optional<bool>(false));
  EXPECT_EQ(c.lr_boundaries, (std::vector<int>{100, 200}));
  EXPECT_EQ(c.input, "clip.rgb");
  EXPECT_EQ(c.seed, 18446744073709551615ull);
}

TEST(Config, ErrorsNameLineAndKey) {
  EXPECT_NE(expect_config_error("gop_size = 3\ngop_size = 4\n").find("test.cfg:2: duplicate key 'gop_size'"),
            std::string::npos);
  EXPECT_NE(expect_config_error("\nframe_rate = 30\n").find("test.cfg:2: unknown key 'frame_rate'"),
            std::string::npos);
  EXPECT_NE(expect_config_error("width = wide\n").find("test.cfg:1: 'width' expects an integer"), std::string::npos);
  EXPECT_NE(expect_config_error("just words\n").find("test.cfg:1:"), std::string::npos);
  EXPECT_NE(expect_config_error("spm = maybe\n").find("'spm'"), std::string::npos);
}

TEST(Config, MissingFileIsAnIoError) { EXPECT_THROW(load_config("/nonexistent/mfvc.cfg"), IoError); }

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"transcode"}).code, 2);
  EXPECT_EQ(run_cli({"compress", "--bogus", "1"}).code, 2);
  const Result missing = run_cli({"compress", "--input", "x.rgb"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--weights is required"), std::string::npos) << missing.err;
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "mfvc_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "micro.cfg") << "latent_channels = 8\nhidden_channels = 8\nhyper_channels = 8\n"
                                         "batch_size = 2\npatch_h = 16\npatch_w = 16\niters = 3\n"
                                         "synth_count = 3\nsynth_size = 24\nlr_values = 1e-3\nlr_boundaries =\n";
    ASSERT_EQ(run_cli({"train-image", "--config", path("micro.cfg"), "--output", path("ae.mfw")}).code, 0);
    for (const char* variant : {"full", "nospm"}) {
      std::vector<std::string> args{"train-stem", "--config", path("micro.cfg"), "--weights", path("ae.mfw"),
                                    "--output", path(std::string(variant) + ".mfw")};
      if (std::string(variant) == "nospm") args.insert(args.end(), {"--spm", "false", "--clip-frames", "3"});
      ASSERT_EQ(run_cli(args).code, 0);
    }
    ASSERT_EQ(run_cli({"synth", "--output", path("clip.rgb"), "--frames", "6", "--width", "20", "--height", "16"}).code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};
fs::path CliPipeline::dir_;

TEST_F(CliPipeline, CompressDecompressEval) {
  const Result c = run_cli({"compress", "--input", path("clip.rgb"), "--width", "20", "--height", "16", "--weights",
                            path("ae.mfw"), "--stem", path("full.mfw"), "--gop-size", "3", "--output", path("c.mfvc")});
  ASSERT_EQ(c.code, 0) << c.err;
  const Result d = run_cli({"decompress", "--input", path("c.mfvc"), "--weights", path("ae.mfw"), "--stem",
                            path("full.mfw"), "--output", path("d.rgb")});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(fs::file_size(path("d.rgb")), fs::file_size(path("clip.rgb")));
  const Result e = run_cli({"eval", "--input", path("c.mfvc"), "--reference", path("clip.rgb"), "--weights",
                            path("ae.mfw"), "--stem", path("full.mfw")});
  ASSERT_EQ(e.code, 0) << e.err;
  std::istringstream csv(e.out);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "frame_index,frame_type,bits,bpp,psnr,ms_ssim");
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].substr(0, 4), "0,I,");
  EXPECT_EQ(rows[1].substr(0, 4), "1,P,");
  EXPECT_EQ(rows[3].substr(0, 4), "3,I,");
}

TEST_F(CliPipeline, WrongWeightsExitOneWithDigestMessage) {
  ASSERT_EQ(run_cli({"compress", "--input", path("clip.rgb"), "--width", "20", "--height", "16", "--weights",
                     path("ae.mfw"), "--stem", path("full.mfw"), "--output", path("w.mfvc")})
                .code,
            0);
  const Result d = run_cli({"decompress", "--input", path("w.mfvc"), "--weights", path("ae.mfw"), "--stem",
                            path("nospm.mfw"), "--output", path("w.rgb")});
  EXPECT_EQ(d.code, 1);
  EXPECT_NE(d.err.find("digest"), std::string::npos) << d.err;
}

TEST_F(CliPipeline, MissingFileExitsOneNamingThePath) {
  const Result d = run_cli({"decompress", "--input", path("absent.mfvc"), "--weights", path("ae.mfw"), "--stem",
                            path("full.mfw"), "--output", path("x.rgb")});
  EXPECT_EQ(d.code, 1);
  EXPECT_NE(d.err.find("absent.mfvc"), std::string::npos) << d.err;
}

TEST_F(CliPipeline, AblateAndHeatmap) {
  const Result a = run_cli({"ablate", "--weights", path("ae.mfw"), "--stems", path("full.mfw") + "," + path("nospm.mfw"),
                            "--frames", "4", "--width", "16", "--height", "16", "--output", path("ablate.csv")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("i-frames only"), std::string::npos);
  EXPECT_NE(a.out.find("full"), std::string::npos);
  EXPECT_NE(a.out.find("no_spm"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("ablate.csv")));
  const Result h = run_cli({"heatmap", "--input", path("clip.rgb"), "--width", "20", "--height", "16", "--weights",
                            path("ae.mfw"), "--stem", path("full.mfw"), "--frame", "2", "--output", path("heat")});
  ASSERT_EQ(h.code, 0) << h.err;
  EXPECT_TRUE(fs::exists(path("heat.csv")));
  EXPECT_TRUE(fs::exists(path("heat.pgm")));
  EXPECT_EQ(run_cli({"heatmap", "--input", path("clip.rgb"), "--width", "20", "--height", "16", "--weights",
                     path("ae.mfw"), "--stem", path("full.mfw"), "--frame", "0", "--output", path("heat")})
                .code,
            2);
}

TEST_F(CliPipeline, ClipLengthIsValidated) {
  for (const char* n : {"1", "8"}) {
    const Result r = run_cli({"train-stem", "--config", path("micro.cfg"), "--weights", path("ae.mfw"), "--output",
                              path("bad.mfw"), "--clip-frames", n});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--clip-frames"), std::string::npos) << r.err;
  }
}

TEST_F(CliPipeline, FlagsOverrideTheConfigFile) {
  std::ofstream(dir_ / "gop.cfg") << "gop_size = 1\n";
  const Result c = run_cli({"compress", "--config", path("gop.cfg"), "--gop-size", "6", "--input", path("clip.rgb"),
                            "--width", "20", "--height", "16", "--weights", path("ae.mfw"), "--stem", path("full.mfw"),
                            "--output", path("o.mfvc")});
  ASSERT_EQ(c.code, 0) << c.err;
  const Result e = run_cli({"eval", "--input", path("o.mfvc"), "--reference", path("clip.rgb"), "--weights",
                            path("ae.mfw"), "--stem", path("full.mfw")});
  EXPECT_NE(e.out.find("5,P,"), std::string::npos) << e.out;
}

}  // namespace
}  // namespace mfvc
