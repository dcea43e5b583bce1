/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "../tools/cli.hpp"
#include "insloc/checkpoint.hpp"

namespace fs = std::filesystem;
using insloc::read_file;

namespace {

constexpr const char* kTinyConfig = R"(# small and fast
generator.image_size = 64
generator.strings_max = 2
generator.disc_count_min = 4
generator.disc_count_max = 5
generator.disc_radius_min = 3
generator.disc_radius_max = 4
generator.clutter_min = 0
generator.clutter_max = 1
generator.missing_max = 1
corpus.size = 12
detector.backbone_channels = 4, 6, 8
detector.rpn_channels = 8
detector.head_hidden = 16
detector.roi_output_size = 3
detector.anchor_sizes = 16, 24, 40
detector.train.max_steps = 3
detector.detect_score_threshold = 0
unet.depth = 2
unet.base_channels = 4
segmenter.steps = 3
full_segmenter.steps = 3
full_segmenter.window = 32
sweep.sizes = 6, 9
sweep.eval_size = 6
bench.warmup = 1
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("insloc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = (root_ / "tiny.cfg").string();
    insloc::write_file_atomic(config_, kTinyConfig);
  }
  void TearDown() override { fs::remove_all(root_); }

  int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "insloc");
    out_.str("");
    err_.str("");
    return insloc::cli::run(args, out_, err_);
  }
  // Runs a subcommand with the tiny config, seed 4 and --out dir.
  int cmd(const std::string& sub, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{sub, "--config", config_, "--seed", "4", "--out", dir(out)};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }
  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
  std::string config_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}), insloc::cli::kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}), insloc::cli::kExitUsage);
  EXPECT_EQ(cli({"train-detect"}), insloc::cli::kExitUsage);  // --corpus missing
  EXPECT_EQ(cli({"ablate", "--corpus", "x", "--mode", "both"}), insloc::cli::kExitUsage);
  insloc::write_file_atomic(root_ / "bad.cfg", "corpus.sise = 3\n");
  EXPECT_EQ(cli({"gen-corpus", "--config", dir("bad.cfg"), "--out", dir("c")}), insloc::cli::kExitUsage);
  EXPECT_NE(err_.str().find("unknown key"), std::string::npos);
  EXPECT_EQ(cli({"gen-corpus", "--help"}), insloc::cli::kExitOk);
}

TEST_F(CliTest, RuntimeFailuresExitTwo) {
  EXPECT_EQ(cmd("eval-detect", "o", {"--corpus", dir("missing"), "--detector", dir("none.ckpt")}),
            insloc::cli::kExitFailure);
  EXPECT_FALSE(err_.str().empty());
}

TEST_F(CliTest, FullWorkflowIsDeterministic) {
  ASSERT_EQ(cmd("gen-corpus", "corpus"), 0) << err_.str();
  const std::string corpus = dir("corpus");
  ASSERT_TRUE(fs::exists(root_ / "corpus" / "manifest.json"));

  for (const std::string run : {"a", "b"}) {
    ASSERT_EQ(cmd("train-detect", run, {"--corpus", corpus}), 0) << err_.str();
    ASSERT_EQ(cmd("train-seg", run, {"--corpus", corpus}), 0) << err_.str();
    ASSERT_EQ(cmd("train-seg", run, {"--corpus", corpus, "--mode", "full"}), 0) << err_.str();
    const std::string det = dir(run + "/detector.ckpt"), seg = dir(run + "/segmenter.ckpt");
    ASSERT_EQ(cmd("eval-detect", run, {"--corpus", corpus, "--detector", det}), 0) << err_.str();
    ASSERT_EQ(cmd("eval-locate", run, {"--corpus", corpus, "--detector", det, "--segmenter", seg}), 0)
        << err_.str();
    ASSERT_EQ(cmd("locate", run,
                  {"--image", corpus + "/images/0000.png", "--detector", det, "--segmenter", seg, "--overlay"}),
              0)
        << err_.str();
    ASSERT_EQ(cmd("crossval", run, {"--corpus", corpus, "--protocol", "segmentation"}), 0) << err_.str();
    ASSERT_EQ(cmd("ablate", run,
                  {"--corpus", corpus, "--mode", "all", "--detector", det, "--segmenter", seg,
                   "--full-segmenter", dir(run + "/full_segmenter.ckpt")}),
              0)
        << err_.str();
    ASSERT_EQ(cmd("sweep", run), 0) << err_.str();
    ASSERT_EQ(cmd("bench", run, {"--corpus", corpus, "--detector", det, "--segmenter", seg}), 0)
        << err_.str();
  }

  for (const char* name :
       {"detector.ckpt", "segmenter.ckpt", "full_segmenter.ckpt", "detector_loss.csv", "segmenter_loss.csv",
        "full_segmenter_loss.csv", "detection_metrics.json", "location_metrics.json",
        "crossval_segmentation.json", "ablation_unet_only.json", "ablation_detector_only.json",
        "ablation_cascade.json", "sweep.csv"}) {
    EXPECT_EQ(read_file(root_ / "a" / name), read_file(root_ / "b" / name)) << name;
  }
  const auto metrics = nlohmann::json::parse(read_file(root_ / "a" / "detection_metrics.json"));
  for (const char* key : {"precision", "recall", "tp", "fp", "fn"}) EXPECT_TRUE(metrics.contains(key));
  const auto report = nlohmann::json::parse(read_file(root_ / "a" / "report.json"));
  EXPECT_TRUE(report.contains("timing_ms"));
  EXPECT_TRUE(fs::exists(root_ / "a" / "overlay.png"));
  const auto timing = nlohmann::json::parse(read_file(root_ / "a" / "timing.json"));
  EXPECT_EQ(timing["image_count"], 4);
}

TEST_F(CliTest, CheckpointMustMatchConfig) {
  ASSERT_EQ(cmd("gen-corpus", "corpus"), 0) << err_.str();
  ASSERT_EQ(cmd("train-seg", "m", {"--corpus", dir("corpus")}), 0) << err_.str();
  // Default config expects a depth-4 U-net and a larger detector.
  EXPECT_EQ(cli({"eval-detect", "--corpus", dir("corpus"), "--detector", dir("m/segmenter.ckpt"),
                 "--out", dir("o")}),
            insloc::cli::kExitFailure);
}
