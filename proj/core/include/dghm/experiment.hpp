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

// Experiment runner: configuration, fold construction, the single-run
// protocol and the grids built from it.
//
// One run = (loss, eta, fold, seed). The corpus is corrupted at eta with a
// stream derived from the seed (so every loss sees the same missing
// annotations), the model trains on the remaining folds and is evaluated on
// the held-out fold against complete ground truth. T-recall and R-recall
// come from the same model on its own training scenes.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dghm/loss_spec.hpp"
#include "dghm/metrics.hpp"
#include "dghm/model.hpp"
#include "dghm/sim.hpp"
#include "dghm/trainer.hpp"

namespace dghm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusConfig {
  /// Record file to load; empty generates from `scene`, counts and seed.
  std::string path;
  SceneSpec scene;
  int n_ap = 64;
  int n_np = 64;
  std::uint64_t seed = 42;
};

struct EvalConfig {
  /// Anchors scoring below this never become detections.
  double score_floor = 0.05;
  double nms_iou = 0.5;
  double min_precision = kMinPrecision;
  std::vector<double> froc_levels{kFrocLevels.begin(), kFrocLevels.end()};
  FrocLevelMode froc_mode = FrocLevelMode::FalsePositivesPerImage;
};

struct ExperimentConfig {
  CorpusConfig corpus;
  /// train.loss is the loss of single runs and the template (hyperparameters)
  /// for every grid; train.seed is replaced per run.
  TrainConfig train = default_experiment_train();
  EvalConfig eval;

  double eta = 0.7;
  std::vector<double> eta_grid{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<LossKind> compare_losses{LossKind::CE, LossKind::Focal, LossKind::GhmC, LossKind::SCE,
                                       LossKind::DghmC};
  bool include_dghm_star = false;
  std::vector<LossKind> sweep_losses{LossKind::CE, LossKind::Focal, LossKind::SCE, LossKind::GhmC,
                                     LossKind::DghmC};
  /// (mu_n, mu_c) pairs, lambda held at train.loss.harmonizer.lambda.
  std::vector<std::pair<double, double>> mu_grid{{1.0, 1.0}, {2.0, 1.0}, {1.0, 0.5}, {0.5, 2.0},
                                                 {1.0 / 1.5, 1.5}, {1.5, 1.0 / 1.5}, {2.0, 0.5}};
  /// Lambda values, mu held at train.loss.harmonizer.
  std::vector<double> lambda_grid{0.7, 0.8, 0.9};

  int folds = 5;
  /// Folds actually evaluated by train/compare (0 = all) and by ablate /
  /// sweep-eta.
  int fold_limit = 0;
  int grid_fold_limit = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  static TrainConfig default_experiment_train();
  /// Throws ConfigError.
  void validate() const;
};

/// Strict parse: unknown keys, wrong types and invalid values throw
/// ConfigError. Missing keys keep their defaults.
ExperimentConfig parse_config(std::string_view json_text);
/// Canonical form: every field, keys sorted, shortest round-trip reals.
std::string canonical_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::string scene_spec_json(const SceneSpec& spec);

/// Scene-level folds: AP scenes are shuffled and dealt round-robin, then NP
/// scenes continue the deal, so every fold gets floor or ceil of each class.
/// Returns the fold of every scene. Throws std::invalid_argument unless
/// 2 <= k <= scene count.
std::vector<int> kfold_split(std::span<const Scene> scenes, int k, std::uint64_t seed);

/// Loads corpus.path or generates the corpus.
std::vector<Scene> load_corpus(const CorpusConfig& cfg);

struct RunKey {
  LossSpec loss;
  double eta = 0.0;
  int fold = 0;
  std::uint64_t seed = 0;
};

struct RunRecord {
  std::string config_hash;
  RunKey key;
  MetricsReport report;
  double wall_seconds = 0.0;
};

struct RunArtifacts {
  TrainResult trained;
  /// Labelled training pool the model was fitted on.
  std::vector<LabeledAnchor> pool;
  MetricsReport report;
};

class ExperimentContext {
 public:
  ExperimentContext(ExperimentConfig cfg, std::vector<Scene> corpus);

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::vector<Scene>& corpus() const { return corpus_; }
  const std::vector<int>& folds() const { return folds_; }
  /// Fold indices evaluated under `limit` (0 = all).
  std::vector<int> evaluated_folds(int limit) const;

  RunArtifacts run(const RunKey& key) const;
  RunRecord record(const RunKey& key) const;
  /// Runs every key on up to `jobs` threads. Output order follows `keys`; the
  /// first failing key (in key order) rethrows.
  std::vector<RunRecord> run_all(std::span<const RunKey> keys, int jobs) const;

 private:
  ExperimentConfig cfg_;
  std::string hash_;
  std::vector<Scene> corpus_;
  std::vector<int> folds_;
};

std::vector<RawPrediction> predict(const Predictor& model, std::span<const LabeledAnchor> anchors);

/// Test metrics of `model` on `test` scenes (complete ground truth) plus
/// T-recall / R-recall on the corrupted `train` scenes.
MetricsReport evaluate(const Predictor& model, std::span<const Scene> test, std::span<const Scene> train,
                       const SceneSpec& spec, const EvalConfig& eval);

/// Grid key lists.
std::vector<RunKey> compare_keys(const ExperimentContext& ctx);
std::vector<RunKey> sweep_eta_keys(const ExperimentContext& ctx);
std::vector<RunKey> ablate_mu_keys(const ExperimentContext& ctx);
std::vector<RunKey> ablate_lambda_keys(const ExperimentContext& ctx);

/// Result table: one `run` row per record, then one `mean` row per distinct
/// (loss, mu_n, mu_c, lambda, eta) in first-appearance order. Std columns are
/// filled only when a group has two or more defined values. Undefined
/// T/R-recall cells are left empty and excluded from the summary. Throws
/// std::invalid_argument when records carry different config hashes.
void write_results_csv(std::ostream& out, std::span<const RunRecord> records);

struct ResultRow {
  std::string row_type;
  std::string config_hash;
  std::string loss;
  double mu_n = 0.0;
  double mu_c = 0.0;
  double lambda = 0.0;
  double eta = 0.0;
  std::size_t n_runs = 0;
  /// recall, precision, nfps, froc, t_recall, r_recall, threshold; NaN for
  /// empty cells.
  std::array<double, 7> values{};
  std::array<double, 7> stds{};
};

/// Parses a results CSV back (used to recompute summaries).
std::vector<ResultRow> read_results_csv(std::istream& in);

/// Wall time per run; kept apart from the results so those stay byte-stable.
void write_timing_csv(std::ostream& out, std::span<const RunRecord> records);

}  // namespace dghm
