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

// Gradient-density harmonizing over decoupled example partitions.
//
// Gradient norms g = |p - p*| are binned into `bin_count` unit regions over
// [0, 1] (half-open bins, the last one closed at 1). The density of an
// example is the population of its bin divided by the clipped length of the
// window of width 1/bin_count centred on g. Harmonized weights are
//
//   beta_i = N' / GD(g_i)^gamma_i
//
// where gamma_i switches to mu_n / mu_c for outliers (g >= lambda) of the
// noisy / clean partitions. Weights are per-iteration constants: nothing
// differentiates through them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dghm/loss_kernels.hpp"

namespace dghm {

enum class HarmonizerMode : std::uint8_t { Ghm, Dghm, DghmStar };

/// Pooled is the single GHM partition; Clean/Noisy are the two-way split;
/// APp/APn/NPn the three-way split.
enum class Partition : std::uint8_t { Pooled, Clean, Noisy, APp, APn, NPn };

enum class NConvention : std::uint8_t { TotalN, PartitionN };

std::string_view to_string(HarmonizerMode mode);
std::string_view to_string(Partition part);
std::optional<Partition> partition_from_string(std::string_view s);
std::optional<HarmonizerMode> harmonizer_mode_from_string(std::string_view s);

/// Number of gradient-norm distributions M: 1, 2 or 3.
int distribution_count(HarmonizerMode mode);
bool is_noisy(Partition part);

/// p*=0 in an AP image is noisy; everything else is clean. Three-way mode
/// further separates AP positives from NP negatives.
Partition partition_of(Label p_star, bool ap_image, HarmonizerMode mode);

struct HarmonizerConfig {
  HarmonizerMode mode = HarmonizerMode::Dghm;
  int bin_count = 10;
  double mu_n = 2.0;
  double mu_c = 0.5;
  double lambda = 0.9;
  NConvention n_convention = NConvention::TotalN;
  /// Exponential moving average of bin counts across batches; 0 disables it.
  double ema_momentum = 0.0;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

class GradientHistogram {
 public:
  explicit GradientHistogram(int bin_count = 10);

  int bin_count() const { return static_cast<int>(counts_.size()); }
  double bin_width() const { return 1.0 / static_cast<double>(counts_.size()); }
  double bin_low(int k) const;
  double bin_high(int k) const;

  /// Throws std::domain_error for g outside [0, 1].
  int bin_of(double g) const;
  void add(double g);
  void add_count(int bin, std::uint64_t n);

  std::uint64_t count_in_bin(int k) const { return counts_.at(static_cast<std::size_t>(k)); }
  std::uint64_t count_at(double g) const { return count_in_bin(bin_of(g)); }
  std::uint64_t total() const { return total_; }
  std::span<const std::uint64_t> counts() const { return counts_; }

  GradientHistogram& operator+=(const GradientHistogram& other);
  bool operator==(const GradientHistogram&) const = default;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

using HistogramSet = std::map<Partition, GradientHistogram>;

/// min(g + w/2, 1) - max(g - w/2, 0).
double valid_length(double g, double bin_width);

/// count / valid_length(g) with the count floored at 1.
double gradient_density(double count, double g, double bin_width);
double gradient_density(const GradientHistogram& hist, double g);

/// One histogram per partition present; a single Pooled histogram in GHM
/// mode regardless of the supplied partitions.
HistogramSet build_histograms(std::span<const double> g, std::span<const Partition> parts,
                              const HarmonizerConfig& cfg);

struct HarmonizedExample {
  double g = 0.0;
  Partition partition = Partition::Pooled;
  double beta = 0.0;
  double gamma = 1.0;
};

struct HarmonizedBatch {
  std::vector<HarmonizedExample> examples;
  int distributions = 1;
  std::size_t batch_size = 0;
  HistogramSet histograms;
};

/// Running bin counts per partition; see HarmonizerConfig::ema_momentum.
class DensityEma {
 public:
  explicit DensityEma(double momentum) : momentum_(momentum) {}

  /// Folds this batch's histograms in and returns the smoothed counts.
  const std::map<Partition, std::vector<double>>& update(const HistogramSet& batch);
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::map<Partition, std::vector<double>> smoothed_;
};

/// gamma_i: mu_n for noisy outliers, mu_c for clean outliers, 1 otherwise.
/// Always 1 in GHM mode.
double outlier_exponent(double g, Partition part, const HarmonizerConfig& cfg);

HarmonizedBatch harmonize_weights(std::span<const double> g, std::span<const Partition> parts,
                                  const HarmonizerConfig& cfg, DensityEma* ema = nullptr);

struct ClassificationExample {
  Prediction pred;
  Label label = Label::Negative;
  bool ap_image = false;
};

struct HarmonizedLoss {
  double loss = 0.0;
  HarmonizedBatch batch;
  /// d(loss)/d(logit_i) with every beta held fixed.
  std::vector<double> grad_logit;
};

/// (1/N) sum beta_i CE_i over a pooled histogram with unit exponents.
/// Throws std::invalid_argument on an empty batch.
HarmonizedLoss ghm_c_loss(std::span<const ClassificationExample> batch, const HarmonizerConfig& cfg,
                          DensityEma* ema = nullptr);

/// (1/(M N)) sum beta_i CE_i with per-partition densities; M is fixed by the
/// mode even when a partition is absent from the batch.
HarmonizedLoss dghm_c_loss(std::span<const ClassificationExample> batch, const HarmonizerConfig& cfg,
                           DensityEma* ema = nullptr);

/// Loss and logit gradients for externally supplied weights. Used by the
/// finite-difference harness, which must evaluate perturbed points against
/// the weights of the unperturbed batch.
HarmonizedLoss frozen_harmonized_loss(std::span<const ClassificationExample> batch, const HarmonizedBatch& frozen);

}  // namespace dghm
