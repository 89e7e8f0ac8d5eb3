// Drives the tartekit binary end to end in a scratch directory.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tartekit/downstream/features.hpp"
#include "tartekit/kb/store.hpp"

namespace fs = std::filesystem;

namespace tartekit {
namespace {

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("tartekit_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "cfg.json") << R"({
      "encoder": {"d_lm": 24, "d_model": 16, "layers": 1, "heads": 2, "d_ff": 32,
                  "projection_hidden": 16, "matryoshka_dims": [8, 16]},
      "pretrain": {"total_steps": 10, "entities_per_batch": 8, "warmup_steps": 2,
                   "checkpoint_interval": 10, "matryoshka_dims": [8, 16]},
      "finetune": {"max_epochs": 3, "bags": 2, "learning_rates": [0.001]}})";
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::ofstream t(dir_ / "table.csv");
    t << "id,city,size,y\n";
    const char* cities[] = {"Paris", "Lyon", "\"Nice, FR\""};
    for (int i = 0; i < 40; ++i) {
      const double size = 1.0 + (i * 7 % 10);
      t << "r" << i << "," << cities[i % 3] << "," << size << "," << 2.0 * size + (i % 3) + noise(rng) << "\n";
    }
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static int run(const std::string& args, const std::string& log = "log.txt") {
    const std::string cmd = "cd '" + dir_.string() + "' && '" TARTEKIT_CLI "' " + args + " > " + log + " 2>&1";
    return std::system(cmd.c_str());
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(dir_ / p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, KbStatsMatchesRecount) {
  ASSERT_EQ(run("toy-kb --entities 30 --seed 2 --out kb"), 0) << slurp("log.txt");
  ASSERT_EQ(run("kb-stats kb/kb.tsv --out kbstats", "stats.txt"), 0) << slurp("stats.txt");
  const KbStatistics s = load_triples(dir_ / "kb/kb.tsv").statistics();
  const std::string out = slurp("stats.txt");
  EXPECT_NE(out.find("entities: " + std::to_string(s.entities) + "\n"), std::string::npos) << out;
  EXPECT_NE(out.find("relations: " + std::to_string(s.relations) + "\n"), std::string::npos);
  EXPECT_NE(out.find("facts: " + std::to_string(s.facts) + "\n"), std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp("kbstats/manifest.json"));
  EXPECT_EQ(manifest.at("command"), "kb-stats");
  EXPECT_TRUE(manifest.at("inputs").contains("kb/kb.tsv"));
}

TEST_F(Cli, PretrainFeaturizeFitPredict) {
  ASSERT_EQ(run("toy-kb --entities 30 --seed 2 --out kb2"), 0);
  ASSERT_EQ(run("pretrain --kb kb2/kb.tsv --config cfg.json --seed 1 --out pre"), 0) << slurp("log.txt");
  ASSERT_TRUE(fs::exists(dir_ / "pre/step_10.ckpt"));
  ASSERT_TRUE(fs::exists(dir_ / "pre/loss.csv"));

  ASSERT_EQ(run("featurize table.csv --model pre/step_10.ckpt --config cfg.json --dim 8 --target y "
                "--id-column id --out feat"),
            0)
      << slurp("log.txt");
  std::string id;
  const FeatureMatrix f = read_feature_cache(dir_ / "feat/features.bin", &id);
  EXPECT_EQ(f.values.rows(), 40);
  EXPECT_EQ(f.values.cols(), 8);
  EXPECT_FALSE(id.empty());

  for (const std::string method : {"ridge", "boost"}) {
    ASSERT_EQ(run("fit table.csv --target y --method " + method +
                  " --model pre/step_10.ckpt --config cfg.json --train-size 30 --id-column id --seed 5 --out fit_" +
                  method),
              0)
        << slurp("log.txt");
    ASSERT_EQ(run("predict table.csv --model fit_" + method + "/fitted.ckpt --id-column id --out pred_" + method), 0)
        << slurp("log.txt");
    const Predictions held_in = read_predictions(dir_ / ("fit_" + method) / "train_predictions.csv");
    const Predictions all = read_predictions(dir_ / ("pred_" + method) / "predictions.csv");
    ASSERT_EQ(held_in.values.size(), 30u);
    ASSERT_EQ(all.values.size(), 40u);
    for (std::size_t i = 0; i < held_in.values.size(); ++i) {
      const auto at = std::find(all.row_ids.begin(), all.row_ids.end(), held_in.row_ids[i]);
      ASSERT_NE(at, all.row_ids.end());
      EXPECT_EQ(all.values[at - all.row_ids.begin()], held_in.values[i]) << held_in.row_ids[i];
    }
    EXPECT_TRUE(fs::exists(dir_ / ("fit_" + method) / "metrics.json"));
  }
}

TEST_F(Cli, BadArgumentsFail) {
  EXPECT_NE(run("fit table.csv --target y --out x --no-such-flag"), 0);
  EXPECT_NE(run("no-such-command"), 0);
  EXPECT_NE(run("fit table.csv --target y --method nonsense --out x"), 0);
  EXPECT_NE(run("predict table.csv --model missing.ckpt --out x"), 0);
}

}  // namespace
}  // namespace tartekit
