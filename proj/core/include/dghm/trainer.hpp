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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dghm/harmonizer.hpp"
#include "dghm/loss_spec.hpp"
#include "dghm/model.hpp"
#include "dghm/sim.hpp"

namespace dghm {

/// Thrown when a training loss turns non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double decay_factor = 0.1;
  /// 1-based epochs at whose start the learning rate is multiplied by
  /// decay_factor.
  std::vector<int> decay_epochs{9, 12};
  int epochs = 15;
  std::size_t batch_size = 8;
  /// 0 picks enough batches to visit every positive once per epoch.
  std::size_t batches_per_epoch = 0;
  LossSpec loss;
  double regression_weight = 1.0;
  std::vector<std::size_t> hidden{16};
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  double learning_rate_at(int epoch) const;
};

/// Decay points at 60% and 80% of the run (9 and 12 for 15 epochs).
std::vector<int> default_decay_epochs(int epochs);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
  std::size_t examples_seen = 0;
  std::size_t fallback_batches = 0;
  /// Gradient norms of every example seen this epoch, keyed APp / APn / NPn.
  HistogramSet histograms;
};

struct TrainResult {
  Predictor model;
  std::vector<EpochLog> log;
};

/// Seeded sampling -> forward -> (harmonize) -> backward -> Adam. Throws
/// std::invalid_argument on an empty pool and DivergenceError on a
/// non-finite loss.
TrainResult train(std::span<const LabeledAnchor> pool, const TrainConfig& cfg);

/// The initial model train() starts from.
Predictor initial_model(std::size_t feature_dim, const TrainConfig& cfg);

std::vector<TrainingExample> as_training_examples(std::span<const LabeledAnchor> pool);

/// Three-way gradient-norm histograms of `model` over every anchor of `pool`.
HistogramSet gradient_histograms(const Predictor& model, std::span<const LabeledAnchor> pool, int bin_count = 10);

/// Header: <key_column>,partition,bin_index,bin_low,bin_high,count. Every row
/// of `hists` carries `key` in the first column.
void write_histogram_csv(std::ostream& out, std::string_view key, const HistogramSet& hists, bool header = true,
                         std::string_view key_column = "mode");
/// Reads the rows whose first column equals `key` (all rows when empty).
HistogramSet read_histogram_csv(std::istream& in, std::string_view key = {});

/// Header: epoch,mean_loss,lr,examples_seen,fallback_batches,histogram_file
void write_training_log_csv(std::ostream& out, std::span<const EpochLog> log, std::string_view histogram_file);

}  // namespace dghm
