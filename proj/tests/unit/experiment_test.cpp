// Copyright 2026 The DGHM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dghm/experiment.hpp"

namespace dghm {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmallConfig = R"({
  "corpus": {"n_ap": 10, "n_np": 10, "seed": 3, "scene": {"anchor_stride": 8}},
  "train": {"epochs": 2, "batches_per_epoch": 5, "batch_size": 16, "hidden": [4]},
  "seeds": [1, 2],
  "fold_limit": 1,
  "compare_losses": ["CE", "DGHM-C"]
})";

ExperimentContext small_context() {
  const ExperimentConfig cfg = parse_config(kSmallConfig);
  return ExperimentContext(cfg, load_corpus(cfg.corpus));
}

TEST(ConfigTest, DefaultsAndOverrides) {
  const ExperimentConfig d = parse_config("{}");
  EXPECT_EQ(d.eta, 0.7);
  EXPECT_EQ(d.folds, 5);
  EXPECT_EQ(d.train.loss.kind, LossKind::DghmC);
  EXPECT_EQ(d.train.loss.harmonizer.mu_n, 2.0);
  EXPECT_EQ(d.train.loss.harmonizer.mu_c, 0.5);
  EXPECT_EQ(d.train.loss.harmonizer.lambda, 0.9);

  const ExperimentConfig c = parse_config(R"({"eta": 0.3, "train": {"epochs": 10},
      "loss": {"kind": "GHM-C", "harmonizer": {"bin_count": 20}}})");
  EXPECT_EQ(c.eta, 0.3);
  EXPECT_EQ(c.train.epochs, 10);
  EXPECT_EQ(c.train.decay_epochs, default_decay_epochs(10));
  EXPECT_EQ(c.train.loss.kind, LossKind::GhmC);
  EXPECT_EQ(c.train.loss.harmonizer.bin_count, 20);
}

TEST(ConfigTest, StrictParsing) {
  EXPECT_THROW(parse_config(R"({"etaa": 0.3})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"lr": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eta": "high"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eta": 1.5})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"loss": {"kind": "Hinge"}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"folds": 1})"), ConfigError);
}

TEST(ConfigTest, CanonicalFormAndHash) {
  const ExperimentConfig a = parse_config("{}");
  const ExperimentConfig b = parse_config(canonical_config(a));
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16U);
  EXPECT_EQ(config_hash(a), config_hash(parse_config(R"({"eta": 0.7})")));
  EXPECT_NE(config_hash(a), config_hash(parse_config(R"({"eta": 0.6})")));
}

std::vector<Scene> class_corpus(int ap, int np) {
  std::vector<Scene> s(static_cast<std::size_t>(ap + np));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].id = static_cast<std::uint32_t>(i);
    s[i].image_class = static_cast<int>(i) < ap ? ImageClass::AP : ImageClass::NP;
  }
  return s;
}

TEST(KfoldTest, StratifiedCounts) {
  const auto scenes = class_corpus(10, 10);
  const auto folds = kfold_split(scenes, 5, 1);
  ASSERT_EQ(folds.size(), 20U);
  std::map<int, std::pair<int, int>> per;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    (scenes[i].is_ap() ? per[folds[i]].first : per[folds[i]].second) += 1;
  }
  ASSERT_EQ(per.size(), 5U);
  for (const auto& [f, c] : per) {
    EXPECT_EQ(c.first, 2) << f;
    EXPECT_EQ(c.second, 2) << f;
  }
  EXPECT_EQ(kfold_split(scenes, 5, 1), folds);
  EXPECT_NE(kfold_split(scenes, 5, 2), folds);
}

TEST(KfoldTest, LeaveOneOutAndErrors) {
  const auto scenes = class_corpus(3, 2);
  auto folds = kfold_split(scenes, 5, 7);
  std::sort(folds.begin(), folds.end());
  EXPECT_EQ(folds, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(kfold_split(scenes, 1, 7), std::invalid_argument);
  EXPECT_THROW(kfold_split(scenes, 6, 7), std::invalid_argument);
}

TEST(KfoldProperty, BalancedForAnySize) {
  for (int ap = 1; ap < 12; ++ap) {
    for (int np = 0; np < 7; ++np) {
      const auto scenes = class_corpus(ap, np);
      const int k = std::min(4, ap + np);
      if (k < 2) continue;
      const auto folds = kfold_split(scenes, k, 11);
      std::vector<int> ap_count(static_cast<std::size_t>(k)), np_count(static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < folds.size(); ++i) {
        ASSERT_GE(folds[i], 0);
        ASSERT_LT(folds[i], k);
        (scenes[i].is_ap() ? ap_count : np_count)[static_cast<std::size_t>(folds[i])] += 1;
      }
      const auto [amin, amax] = std::minmax_element(ap_count.begin(), ap_count.end());
      const auto [nmin, nmax] = std::minmax_element(np_count.begin(), np_count.end());
      EXPECT_LE(*amax - *amin, 1);
      EXPECT_LE(*nmax - *nmin, 1);
    }
  }
}

TEST(RunTest, KeysAndDeterminism) {
  const auto ctx = small_context();
  const auto keys = compare_keys(ctx);
  EXPECT_EQ(keys.size(), 2U * 2U * 1U);
  const auto a = ctx.record(keys[0]);
  const auto b = ctx.record(keys[0]);
  EXPECT_EQ(a.report.froc, b.report.froc);
  EXPECT_EQ(a.report.threshold, b.report.threshold);
  EXPECT_EQ(a.config_hash, ctx.hash());
  EXPECT_GE(a.report.froc, 0.0);
  EXPECT_LE(a.report.froc, 1.0);
}

TEST(RunTest, ParallelMatchesSerial) {
  const auto ctx = small_context();
  const auto keys = compare_keys(ctx);
  std::stringstream serial;
  std::stringstream parallel;
  write_results_csv(serial, ctx.run_all(keys, 1));
  write_results_csv(parallel, ctx.run_all(keys, 3));
  EXPECT_EQ(serial.str(), parallel.str());
}

TEST(RunTest, GridKeys) {
  const auto ctx = small_context();
  const auto& cfg = ctx.config();
  EXPECT_EQ(sweep_eta_keys(ctx).size(), cfg.sweep_losses.size() * cfg.eta_grid.size() * cfg.seeds.size());
  EXPECT_EQ(ablate_mu_keys(ctx).size(), cfg.mu_grid.size() * cfg.seeds.size());
  EXPECT_EQ(ablate_lambda_keys(ctx).size(), cfg.lambda_grid.size() * cfg.seeds.size());
  for (const auto& k : ablate_mu_keys(ctx)) EXPECT_EQ(k.loss.kind, LossKind::DghmC);
}

TEST(ResultsCsvTest, SummaryRecomputesFromRunRows) {
  const auto ctx = small_context();
  const auto records = ctx.run_all(compare_keys(ctx), 1);
  std::stringstream ss;
  write_results_csv(ss, records);
  const auto rows = read_results_csv(ss);
  std::map<std::string, std::vector<const ResultRow*>> runs;
  std::vector<const ResultRow*> means;
  for (const auto& r : rows) {
    if (r.row_type == "run") runs[r.loss].push_back(&r);
    if (r.row_type == "mean") means.push_back(&r);
  }
  ASSERT_EQ(means.size(), 2U);
  for (const ResultRow* m : means) {
    const auto& group = runs[m->loss];
    EXPECT_EQ(m->n_runs, group.size());
    for (std::size_t c = 0; c < 7; ++c) {
      std::vector<double> xs;
      for (const ResultRow* r : group) {
        if (!std::isnan(r->values[c])) xs.push_back(r->values[c]);
      }
      if (xs.empty()) continue;
      const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      EXPECT_NEAR(m->values[c], mean, 1e-12) << m->loss << " column " << c;
      if (xs.size() >= 2) {
        double ss2 = 0.0;
        for (double x : xs) ss2 += (x - mean) * (x - mean);
        EXPECT_NEAR(m->stds[c], std::sqrt(ss2 / static_cast<double>(xs.size() - 1)), 1e-12);
      }
    }
  }
}

TEST(ResultsCsvTest, MixedHashesRejected) {
  RunRecord a;
  a.config_hash = "aaaa";
  RunRecord b = a;
  b.config_hash = "bbbb";
  const std::vector<RunRecord> records{a, b};
  std::stringstream ss;
  EXPECT_THROW(write_results_csv(ss, records), std::invalid_argument);
}

#ifdef DGHM_CLI_PATH

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dghm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "cfg.json") << kSmallConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(const std::string& args) const {
    const std::string cmd = std::string(DGHM_CLI_PATH) + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string slurp(const fs::path& p) const {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

TEST_F(CliTest, GenWritesCorpusAndRefusesOverwrite) {
  const std::string out = (dir_ / "gen").string();
  EXPECT_EQ(cli("gen --config " + (dir_ / "cfg.json").string() + " --out " + out), 0);
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "corpus.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "manifest.json"));
  const std::string first = slurp(dir_ / "gen" / "corpus.txt");
  EXPECT_EQ(cli("gen --config " + (dir_ / "cfg.json").string() + " --out " + out), 1);
  EXPECT_EQ(cli("gen --force --config " + (dir_ / "cfg.json").string() + " --out " + out), 0);
  EXPECT_EQ(slurp(dir_ / "gen" / "corpus.txt"), first);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
  std::ofstream(dir_ / "bad.json") << R"({"unknown_key": 1})";
  EXPECT_EQ(cli("schema-check --config " + (dir_ / "bad.json").string()), 1);
  EXPECT_EQ(cli("schema-check --config " + (dir_ / "missing.json").string()), 1);
  EXPECT_EQ(cli("schema-check --config " + (dir_ / "cfg.json").string()), 0);
}

TEST_F(CliTest, DivergenceExitsTwo) {
  std::ofstream(dir_ / "hot.json") << R"({"corpus": {"n_ap": 4, "n_np": 4, "scene": {"anchor_stride": 16}},
      "train": {"learning_rate": 1e307, "epochs": 2, "batches_per_epoch": 5, "hidden": [4]},
      "loss": {"kind": "CE"}, "folds": 2, "seeds": [1]})";
  EXPECT_EQ(cli("train --config " + (dir_ / "hot.json").string() + " --out " + (dir_ / "hot").string()), 2)
      << slurp(dir_ / "log.txt");
}

TEST_F(CliTest, SplitCoversEveryScene) {
  EXPECT_EQ(cli("split --config " + (dir_ / "cfg.json").string() + " --out " + (dir_ / "s").string()), 0);
  std::ifstream in(dir_ / "s" / "folds.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scene_id,image_class,fold");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 20);
}

#endif

}  // namespace
}  // namespace dghm
