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

// Two-headed MLP detector head with hand-written backpropagation.
//
//   x -> [tanh dense] x k -> { logit (1), box offsets (4) }
//
// Parameters live in one flat buffer (per layer: weights row-major
// [out x in], then bias) so the optimizer and the finite-difference harness
// can treat them as a single vector.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dghm/harmonizer.hpp"
#include "dghm/loss_spec.hpp"
#include "dghm/rng.hpp"

namespace dghm {

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;  // start of this layer's weights in the flat buffer

  std::size_t weight_count() const { return in * out; }
  std::size_t param_count() const { return in * out + out; }
  bool operator==(const LayerShape&) const = default;
};

struct PredictorOutput {
  double logit = 0.0;
  std::array<double, 4> offsets{};
};

class Predictor {
 public:
  /// Hidden layers get U(-init_scale, init_scale) weights scaled by
  /// 1/sqrt(fan_in); both heads start at zero (p = 0.5, zero offsets).
  Predictor(std::size_t input_dim, std::span<const std::size_t> hidden, Rng& rng, double init_scale = 1.0);
  /// All-zero parameters with the given architecture.
  Predictor(std::size_t input_dim, std::span<const std::size_t> hidden);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_layer_count() const { return layers_.size() - 2; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Throws std::invalid_argument on a feature-dimension mismatch.
  PredictorOutput forward(std::span<const double> features) const;
  /// Row-major [n x input_dim] batch; identical to calling forward per row.
  std::vector<PredictorOutput> forward_batch(std::span<const double> rows) const;

  bool operator==(const Predictor&) const = default;

 private:
  void build_layout(std::span<const std::size_t> hidden);

  std::size_t input_dim_ = 0;
  std::vector<LayerShape> layers_;  // hidden..., classification head, regression head
  std::vector<double> params_;
};

/// One anchor as the trainer sees it.
struct TrainingExample {
  std::span<const double> features;
  Label label = Label::Negative;
  bool ap_image = false;
  std::array<double, 4> targets{};
};

struct BatchGradient {
  double loss = 0.0;
  double classification_loss = 0.0;
  double regression_loss = 0.0;
  std::vector<double> grad;  // same layout as Predictor::params()
  std::vector<double> gradient_norms;
  std::optional<HarmonizedBatch> weights;
};

/// Total loss = classification loss (mean over the batch, or the harmonized
/// form) + regression_weight * mean smooth-L1 over positives, and its exact
/// gradient with harmonizer weights treated as constants. `frozen` replaces
/// freshly computed weights.
BatchGradient backward(const Predictor& model, std::span<const TrainingExample> batch, const LossSpec& spec,
                       double regression_weight = 1.0, DensityEma* ema = nullptr,
                       const HarmonizedBatch* frozen = nullptr);

struct FiniteDifferenceOptions {
  double step = 1e-6;
  /// Above this many parameters a random subset of this size is checked.
  std::size_t max_params = 1000;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error. With a 1e-6 step in binary64
  /// the difference quotient itself is only good to a few 1e-10, so smaller
  /// components are held to an absolute 1e-9 instead.
  double abs_floor = 1e-3;
};

struct FiniteDifferenceReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Parameters whose +/- step moves a regression residual across |x| = 1.
  std::size_t excluded = 0;
};

/// Central differences of the total loss against backward(), with harmonizer
/// weights frozen at the unperturbed point. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
FiniteDifferenceReport finite_difference_check(const Predictor& model, std::span<const TrainingExample> batch,
                                               const LossSpec& spec, double regression_weight = 1.0,
                                               const FiniteDifferenceOptions& options = {});

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(std::size_t param_count, AdamConfig cfg = {});

  /// One bias-corrected Adam update in place.
  void step(std::span<double> params, std::span<const double> grads, double lr);

  std::uint64_t steps() const { return steps_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

/// Text checkpoint: a header line, one "layer <in> <out>" line per layer,
/// then one parameter per line.
void write_checkpoint(std::ostream& out, const Predictor& model);
Predictor read_checkpoint(std::istream& in);

}  // namespace dghm
