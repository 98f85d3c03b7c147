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

#include "dghm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <istream>
#include <ostream>
#include <string>

#include "dghm/text.hpp"

namespace dghm {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kBatchStream = 12;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(decay_factor > 0.0)) throw std::invalid_argument("train config: decay_factor must be > 0");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  for (int e : decay_epochs) {
    if (e < 1 || e > std::max(epochs, 1)) throw std::invalid_argument("train config: decay epoch out of range");
  }
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be > 0");
  if (hidden.empty() || hidden.size() > 2) throw std::invalid_argument("train config: one or two hidden layers");
  if (regression_weight < 0.0) throw std::invalid_argument("train config: regression_weight must be >= 0");
  loss.effective_harmonizer().validate();
}

double TrainConfig::learning_rate_at(int epoch) const {
  double lr = learning_rate;
  for (int e : decay_epochs) {
    if (epoch >= e) lr *= decay_factor;
  }
  return lr;
}

std::vector<int> default_decay_epochs(int epochs) {
  if (epochs < 2) return {};
  const int first = std::max(1, static_cast<int>(std::lround(0.6 * epochs)));
  const int second = std::max(first, static_cast<int>(std::lround(0.8 * epochs)));
  return first == second ? std::vector<int>{first} : std::vector<int>{first, second};
}

Predictor initial_model(std::size_t feature_dim, const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kInitStream));
  return Predictor(feature_dim, cfg.hidden, rng, cfg.init_scale);
}

std::vector<TrainingExample> as_training_examples(std::span<const LabeledAnchor> pool) {
  std::vector<TrainingExample> out;
  out.reserve(pool.size());
  for (const auto& a : pool) out.push_back({a.features, a.p_star, a.ap_image, a.targets});
  return out;
}

namespace {

Partition three_way(const TrainingExample& ex) { return partition_of(ex.label, ex.ap_image, HarmonizerMode::DghmStar); }

}  // namespace

TrainResult train(std::span<const LabeledAnchor> pool, const TrainConfig& cfg) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("train: empty corpus");
  const std::vector<TrainingExample> examples = as_training_examples(pool);
  const SamplingPool sampling = SamplingPool::from(pool);

  TrainResult result{initial_model(pool.front().features.size(), cfg), {}};
  Predictor& model = result.model;
  AdamState adam(model.params().size());
  DensityEma ema(cfg.loss.harmonizer.ema_momentum);
  Rng sampler(derive_seed(cfg.seed, kBatchStream));
  const int bins = cfg.loss.harmonizer.bin_count;

  const std::size_t pos_per_batch =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(cfg.batch_size) / 4.0)));
  const std::size_t batches =
      cfg.batches_per_epoch > 0
          ? cfg.batches_per_epoch
          : std::max<std::size_t>(1, (sampling.positives.size() + pos_per_batch - 1) / pos_per_batch);

  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = cfg.learning_rate_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const Minibatch mb = sample_minibatch(sampling, cfg.batch_size, sampler);
      if (mb.indices.empty()) continue;
      if (mb.fallback) ++log.fallback_batches;
      batch.clear();
      for (std::size_t i : mb.indices) batch.push_back(examples[i]);

      const BatchGradient bg = backward(model, batch, cfg.loss, cfg.regression_weight, &ema);
      if (!std::isfinite(bg.loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b) + ": loss=" + std::to_string(bg.loss));
      }
      loss_sum += bg.loss;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        log.histograms.try_emplace(three_way(batch[i]), bins).first->second.add(bg.gradient_norms[i]);
      }
      log.examples_seen += batch.size();
      adam.step(model.params(), bg.grad, log.learning_rate);
    }
    if (log.fallback_batches > 0) {
      std::clog << "warning: epoch " << epoch << ": " << log.fallback_batches
                << " batches fell back from the 1:3 positive share\n";
    }
    log.mean_loss = loss_sum / static_cast<double>(batches);
    result.log.push_back(std::move(log));
  }
  return result;
}

HistogramSet gradient_histograms(const Predictor& model, std::span<const LabeledAnchor> pool, int bin_count) {
  HistogramSet out;
  for (const auto& a : pool) {
    const PredictorOutput o = model.forward(a.features);
    const Partition p = partition_of(a.p_star, a.ap_image, HarmonizerMode::DghmStar);
    out.try_emplace(p, bin_count).first->second.add(gradient_norm(Prediction::from_logit(o.logit), a.p_star));
  }
  return out;
}

void write_histogram_csv(std::ostream& out, std::string_view key, const HistogramSet& hists, bool header,
                         std::string_view key_column) {
  if (header) out << key_column << ",partition,bin_index,bin_low,bin_high,count\n";
  for (const auto& [part, hist] : hists) {
    for (int k = 0; k < hist.bin_count(); ++k) {
      out << key << ',' << to_string(part) << ',' << k << ',' << fmt_double(hist.bin_low(k)) << ','
          << fmt_double(hist.bin_high(k)) << ',' << hist.count_in_bin(k) << '\n';
    }
  }
}

HistogramSet read_histogram_csv(std::istream& in, std::string_view key) {
  struct Rows {
    std::vector<std::pair<int, std::uint64_t>> bins;
  };
  std::map<Partition, Rows> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.find(",partition,") != std::string::npos) continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 6) throw std::runtime_error("histogram csv: expected 6 columns: '" + line + "'");
    if (!key.empty() && f[0] != key) continue;
    const auto part = partition_from_string(f[1]);
    if (!part) throw std::runtime_error("histogram csv: unknown partition '" + std::string(f[1]) + "'");
    rows[*part].bins.emplace_back(static_cast<int>(parse_int(f[2])), static_cast<std::uint64_t>(parse_int(f[5])));
  }
  HistogramSet out;
  for (const auto& [part, r] : rows) {
    GradientHistogram h(static_cast<int>(r.bins.size()));
    for (const auto& [k, n] : r.bins) h.add_count(k, n);
    out.emplace(part, std::move(h));
  }
  return out;
}

void write_training_log_csv(std::ostream& out, std::span<const EpochLog> log, std::string_view histogram_file) {
  out << "epoch,mean_loss,lr,examples_seen,fallback_batches,histogram_file\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << fmt_double(e.mean_loss) << ',' << fmt_double(e.learning_rate) << ',' << e.examples_seen
        << ',' << e.fallback_batches << ',' << histogram_file << '\n';
  }
}

}  // namespace dghm
