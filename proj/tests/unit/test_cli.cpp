#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vidtr/cli.hpp"
#include "vidtr/harness.hpp"
#include "vidtr/run_config.hpp"

using namespace vidtr;

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("VIDTR_SEED");
    dir_ = fs::temp_directory_path() /
           ("vidtr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    unsetenv("VIDTR_SEED");
    fs::remove_all(dir_);
  }

  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  // Tiny two-epoch run on 16 clips.
  void quick_run(const std::string& out_dir, const std::string& config = "quick.cfg") {
    if (!fs::exists(dir_ / "train.bin"))
      ASSERT_EQ(run({"gen-data", "--seed", "1", "--n", "16", "--out", p("train.bin")}), 0);
    if (!fs::exists(dir_ / "test.bin"))
      ASSERT_EQ(run({"gen-data", "--seed", "1", "--n", "8", "--split", "test", "--out",
                     p("test.bin")}),
                0);
    if (!fs::exists(dir_ / "quick.cfg"))
      write("quick.cfg", "preset=toy\nepochs=2\nbatch_size=8\nmilestones=\n");
    ASSERT_EQ(run({"train", "--config", p(config), "--data", p("train.bin"), "--test-data",
                   p("test.bin"), "--out", p(out_dir)}),
              0)
        << err_.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), kExitUsage);
  EXPECT_EQ(run({"gen-data", "--n", "8"}), kExitUsage);
  EXPECT_EQ(run({"gen-data", "--n", "8", "--task", "spiral", "--out", p("x.bin")}), kExitUsage);
  EXPECT_EQ(run({"--help"}), kExitOk);
  EXPECT_NE(out_.str().find("gen-data"), std::string::npos);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  ASSERT_EQ(run({"gen-data", "--n", "8", "--out", p("d.bin")}), 0);
  EXPECT_EQ(run({"eval", "--checkpoint", p("nope.ckpt"), "--data", p("d.bin")}), kExitRuntime);
  EXPECT_NE(err_.str().find("nope.ckpt"), std::string::npos);
  EXPECT_EQ(run({"eval", "--checkpoint", p("a.ckpt"), "--data", p("missing.bin")}),
            kExitRuntime);
}

TEST_F(CliTest, GenDataUsesEnvironmentSeed) {
  setenv("VIDTR_SEED", "5", 1);
  ASSERT_EQ(run({"gen-data", "--n", "12", "--out", p("env.bin")}), 0);
  EXPECT_EQ(load_dataset(p("env.bin")), gen_moving_dot(5, 12));
  ASSERT_EQ(run({"gen-data", "--n", "12", "--seed", "6", "--out", p("flag.bin")}), 0);
  EXPECT_EQ(load_dataset(p("flag.bin")), gen_moving_dot(6, 12));
  setenv("VIDTR_SEED", "five", 1);
  EXPECT_EQ(run({"gen-data", "--n", "12", "--out", p("bad.bin")}), kExitUsage);
}

TEST_F(CliTest, TrainIsDeterministicAndEchoesConfig) {
  quick_run("run_a");
  const std::string first_out = out_.str();
  quick_run("run_b");
  EXPECT_EQ(out_.str().substr(0, out_.str().find("checkpoint")),
            first_out.substr(0, first_out.find("checkpoint")));
  for (const char* f : {"metrics.csv", "model.ckpt"})
    EXPECT_EQ(slurp(dir_ / "run_a" / f), slurp(dir_ / "run_b" / f)) << f;

  const auto echo = slurp(dir_ / "run_a" / "config.txt");
  auto reparsed = parse_run_config(echo);
  reparsed.finalize(std::nullopt);
  EXPECT_EQ(reparsed.text() + echo.substr(reparsed.text().size()), echo);
  EXPECT_NE(echo.find("seed=0\n"), std::string::npos);
  EXPECT_NE(echo.find("model_seed=0\n"), std::string::npos);
  EXPECT_NE(echo.find("# data="), std::string::npos);

  const auto metrics = slurp(dir_ / "run_a" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "epoch,split,loss,accuracy");
  EXPECT_EQ(load_checkpoint<float>(dir_ / "run_a" / "model.ckpt").config(), model_preset("toy"));
}

TEST_F(CliTest, SeedPrecedence) {
  setenv("VIDTR_SEED", "9", 1);
  quick_run("env_run");
  EXPECT_NE(slurp(dir_ / "env_run" / "config.txt").find("\nseed=9\n"), std::string::npos);
  ASSERT_EQ(run({"train", "--config", p("quick.cfg"), "--data", p("train.bin"), "--out",
                 p("flag_run"), "--seed", "4", "--set", "model_seed=2"}),
            0);
  const auto echo = slurp(dir_ / "flag_run" / "config.txt");
  EXPECT_NE(echo.find("\nseed=4\n"), std::string::npos);
  EXPECT_NE(echo.find("model_seed=2\n"), std::string::npos);
}

TEST_F(CliTest, TrainRejectsBadConfigs) {
  quick_run("ok");
  write("bad.cfg", "epochs=1\nwidth=3\n");
  EXPECT_EQ(run({"train", "--config", p("bad.cfg"), "--data", p("train.bin"), "--out",
                 p("bad")}),
            kExitUsage);
  EXPECT_NE(err_.str().find("line 2"), std::string::npos);
  EXPECT_EQ(run({"train", "--config", p("quick.cfg"), "--data", p("train.bin"), "--out",
                 p("bad"), "--set", "classes=3"}),
            kExitUsage);
  EXPECT_EQ(run({"train", "--config", p("quick.cfg"), "--data", p("train.bin"), "--out",
                 p("bad"), "--set", "heads=5"}),
            kExitUsage);
}

TEST_F(CliTest, EvalMatchesLibraryAndEnsemble) {
  quick_run("run");
  const auto ckpt = p("run/model.ckpt");
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--data", p("test.bin"), "--views", "10x3",
                 "--out", p("eval")}),
            0);
  const auto model = load_checkpoint<float>(ckpt);
  const auto direct = evaluate(model, load_dataset(p("test.bin")), {10, 3});
  char line[64];
  std::snprintf(line, sizeof line, "accuracy %.4f\nloss %.6f\nviews 10x3\n", direct.accuracy,
                direct.loss);
  EXPECT_EQ(out_.str().substr(0, std::string(line).size()), line);
  const std::string single = out_.str();
  EXPECT_EQ(slurp(dir_ / "eval" / "eval.txt"), single);
  const auto probs = slurp(dir_ / "eval" / "probabilities.csv");
  EXPECT_EQ(std::count(probs.begin(), probs.end(), '\n'), 9);
  EXPECT_EQ(probs.substr(0, probs.find('\n')), "clip,label,prediction,p0,p1,p2,p3");

  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--checkpoint", ckpt, "--data", p("test.bin"),
                 "--views", "10x3"}),
            0);
  EXPECT_EQ(out_.str(), single);
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--checkpoint", ckpt, "--checkpoint", ckpt,
                 "--data", p("test.bin")}),
            kExitUsage);
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--data", p("test.bin"), "--views", "2x2"}),
            kExitUsage);
}

TEST_F(CliTest, RolloutWritesFrames) {
  quick_run("run");
  ASSERT_EQ(run({"rollout", "--checkpoint", p("run/model.ckpt"), "--data", p("test.bin"),
                 "--clip-index", "3", "--out", p("roll")}),
            0)
      << err_.str();
  EXPECT_NE(out_.str().find("selected 39 of 128 patch tokens"), std::string::npos);
  for (int t = 0; t < 8; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", t);
    const auto bytes = slurp(dir_ / "roll" / name);
    EXPECT_EQ(bytes.substr(0, 13), "P5\n32 32\n255\n");
    EXPECT_EQ(bytes.size(), 13u + 32 * 32);
    EXPECT_TRUE(fs::exists(dir_ / "roll" / "heatmap" / name));
  }
  EXPECT_TRUE(fs::exists(dir_ / "roll" / "mask.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "roll" / "config.txt"));
  EXPECT_EQ(run({"rollout", "--checkpoint", p("run/model.ckpt"), "--data", p("test.bin"),
                 "--clip-index", "8", "--out", p("roll")}),
            kExitUsage);
  EXPECT_EQ(run({"rollout", "--checkpoint", p("run/model.ckpt"), "--data", p("test.bin"),
                 "--fraction", "0", "--out", p("roll")}),
            kExitUsage);
}

TEST_F(CliTest, RolloutOnCompactModelIsUnsupported) {
  write("compact.cfg",
        "preset=toy\nepochs=1\nbatch_size=8\nmilestones=\npool=topk_std\n"
        "downsample_layers=1\ndownsample_taus=4\n");
  quick_run("compact", "compact.cfg");
  EXPECT_EQ(run({"rollout", "--checkpoint", p("compact/model.ckpt"), "--data", p("test.bin"),
                 "--out", p("roll")}),
            kExitUsage);
  EXPECT_NE(err_.str().find("compact"), std::string::npos);
}

TEST_F(CliTest, CostComparesConfigs) {
  ASSERT_EQ(run({"cost", "--config", "vidtr_s", "--config", "vidtr_s", "--out", p("cost")}), 0);
  const auto csv = slurp(dir_ / "cost" / "compare.csv");
  std::istringstream lines(csv);
  std::string header, a, b;
  std::getline(lines, header);
  std::getline(lines, a);
  std::getline(lines, b);
  EXPECT_EQ(a, b);
  EXPECT_NE(b.find(",0.000000,0.000000,1.000000"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "cost" / "cost_1_vidtr_s.csv"));

  write("mine.cfg", "preset=c_vidtr_s\n");
  ASSERT_EQ(run({"cost", "--config", "vidtr_s", "--config", p("mine.cfg")}), 0);
  EXPECT_NE(out_.str().find("mine"), std::string::npos);
  EXPECT_NE(out_.str().find("52.72"), std::string::npos);
  EXPECT_EQ(run({"cost", "--config", "vidtr_q"}), kExitUsage);
}
