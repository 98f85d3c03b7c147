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

#include "dghm/harmonizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dghm {

std::string_view to_string(HarmonizerMode mode) {
  switch (mode) {
    case HarmonizerMode::Ghm: return "GHM";
    case HarmonizerMode::Dghm: return "DGHM";
    case HarmonizerMode::DghmStar: return "DGHM_STAR";
  }
  return "?";
}

std::string_view to_string(Partition part) {
  switch (part) {
    case Partition::Pooled: return "Pooled";
    case Partition::Clean: return "Clean";
    case Partition::Noisy: return "Noisy";
    case Partition::APp: return "APp";
    case Partition::APn: return "APn";
    case Partition::NPn: return "NPn";
  }
  return "?";
}

std::optional<Partition> partition_from_string(std::string_view s) {
  for (auto p : {Partition::Pooled, Partition::Clean, Partition::Noisy, Partition::APp, Partition::APn,
                 Partition::NPn}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::optional<HarmonizerMode> harmonizer_mode_from_string(std::string_view s) {
  for (auto m : {HarmonizerMode::Ghm, HarmonizerMode::Dghm, HarmonizerMode::DghmStar}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

int distribution_count(HarmonizerMode mode) {
  switch (mode) {
    case HarmonizerMode::Ghm: return 1;
    case HarmonizerMode::Dghm: return 2;
    case HarmonizerMode::DghmStar: return 3;
  }
  return 1;
}

bool is_noisy(Partition part) { return part == Partition::Noisy || part == Partition::APn; }

Partition partition_of(Label p_star, bool ap_image, HarmonizerMode mode) {
  switch (mode) {
    case HarmonizerMode::Ghm:
      return Partition::Pooled;
    case HarmonizerMode::Dghm:
      return (p_star == Label::Negative && ap_image) ? Partition::Noisy : Partition::Clean;
    case HarmonizerMode::DghmStar:
      if (!ap_image) return Partition::NPn;
      return p_star == Label::Positive ? Partition::APp : Partition::APn;
  }
  return Partition::Pooled;
}

void HarmonizerConfig::validate() const {
  if (bin_count < 1) throw std::invalid_argument("harmonizer: bin_count must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("harmonizer: lambda must lie in [0, 1]");
  if (!(mu_n > 0.0) || !(mu_c > 0.0)) throw std::invalid_argument("harmonizer: mu_n and mu_c must be > 0");
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) {
    throw std::invalid_argument("harmonizer: ema_momentum must lie in [0, 1)");
  }
}

GradientHistogram::GradientHistogram(int bin_count) {
  if (bin_count < 1) throw std::invalid_argument("GradientHistogram: bin_count must be >= 1");
  counts_.assign(static_cast<std::size_t>(bin_count), 0);
}

double GradientHistogram::bin_low(int k) const { return static_cast<double>(k) / bin_count(); }

double GradientHistogram::bin_high(int k) const { return static_cast<double>(k + 1) / bin_count(); }

int GradientHistogram::bin_of(double g) const {
  if (!(g >= 0.0 && g <= 1.0)) {
    throw std::domain_error("gradient norm outside [0, 1]: " + std::to_string(g));
  }
  const int n = bin_count();
  int k = std::min(static_cast<int>(std::floor(g * n)), n - 1);
  // g * n can round across a boundary; settle against the exact edges k / n.
  while (k > 0 && g < static_cast<double>(k) / n) --k;
  while (k < n - 1 && g >= static_cast<double>(k + 1) / n) ++k;
  return k;
}

void GradientHistogram::add(double g) { add_count(bin_of(g), 1); }

void GradientHistogram::add_count(int bin, std::uint64_t n) {
  counts_.at(static_cast<std::size_t>(bin)) += n;
  total_ += n;
}

GradientHistogram& GradientHistogram::operator+=(const GradientHistogram& other) {
  if (other.bin_count() != bin_count()) throw std::invalid_argument("GradientHistogram: bin count mismatch");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  total_ += other.total_;
  return *this;
}

double valid_length(double g, double bin_width) {
  return std::min(g + 0.5 * bin_width, 1.0) - std::max(g - 0.5 * bin_width, 0.0);
}

double gradient_density(double count, double g, double bin_width) {
  return std::max(count, 1.0) / valid_length(g, bin_width);
}

double gradient_density(const GradientHistogram& hist, double g) {
  return gradient_density(static_cast<double>(hist.count_at(g)), g, hist.bin_width());
}

namespace {

void check_lengths(std::span<const double> g, std::span<const Partition> parts) {
  if (g.size() != parts.size()) throw std::invalid_argument("harmonizer: gradient and partition lists differ in length");
}

Partition effective_partition(Partition p, HarmonizerMode mode) {
  return mode == HarmonizerMode::Ghm ? Partition::Pooled : p;
}

}  // namespace

HistogramSet build_histograms(std::span<const double> g, std::span<const Partition> parts,
                              const HarmonizerConfig& cfg) {
  check_lengths(g, parts);
  HistogramSet out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Partition p = effective_partition(parts[i], cfg.mode);
    auto it = out.try_emplace(p, cfg.bin_count).first;
    it->second.add(g[i]);
  }
  return out;
}

const std::map<Partition, std::vector<double>>& DensityEma::update(const HistogramSet& batch) {
  for (auto& [part, smoothed] : smoothed_) {
    if (!batch.contains(part)) {
      for (double& c : smoothed) c *= momentum_;
    }
  }
  for (const auto& [part, hist] : batch) {
    auto [it, inserted] = smoothed_.try_emplace(part, hist.counts().begin(), hist.counts().end());
    if (inserted) continue;
    auto& smoothed = it->second;
    for (std::size_t k = 0; k < smoothed.size(); ++k) {
      smoothed[k] = momentum_ * smoothed[k] + (1.0 - momentum_) * static_cast<double>(hist.counts()[k]);
    }
  }
  return smoothed_;
}

double outlier_exponent(double g, Partition part, const HarmonizerConfig& cfg) {
  if (cfg.mode == HarmonizerMode::Ghm || g < cfg.lambda) return 1.0;
  return is_noisy(part) ? cfg.mu_n : cfg.mu_c;
}

HarmonizedBatch harmonize_weights(std::span<const double> g, std::span<const Partition> parts,
                                  const HarmonizerConfig& cfg, DensityEma* ema) {
  cfg.validate();
  HarmonizedBatch out;
  out.histograms = build_histograms(g, parts, cfg);
  out.distributions = distribution_count(cfg.mode);
  out.batch_size = g.size();

  const std::map<Partition, std::vector<double>>* smoothed = nullptr;
  if (ema != nullptr && cfg.ema_momentum > 0.0) smoothed = &ema->update(out.histograms);

  const double width = 1.0 / cfg.bin_count;
  out.examples.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Partition p = effective_partition(parts[i], cfg.mode);
    const GradientHistogram& hist = out.histograms.at(p);
    const int bin = hist.bin_of(g[i]);
    const double count = smoothed != nullptr ? smoothed->at(p)[static_cast<std::size_t>(bin)]
                                             : static_cast<double>(hist.count_in_bin(bin));
    const double n_prime = cfg.n_convention == NConvention::TotalN ? static_cast<double>(g.size())
                                                                   : static_cast<double>(hist.total());
    const double gamma = outlier_exponent(g[i], p, cfg);
    const double gd = gradient_density(count, g[i], width);
    out.examples.push_back({g[i], p, n_prime / std::pow(gd, gamma), gamma});
  }
  return out;
}

namespace {

HarmonizedLoss harmonized(std::span<const ClassificationExample> batch, const HarmonizerConfig& cfg, DensityEma* ema) {
  if (batch.empty()) throw std::invalid_argument("harmonized loss: empty batch");
  std::vector<double> g(batch.size());
  std::vector<Partition> parts(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    g[i] = gradient_norm(batch[i].pred, batch[i].label);
    parts[i] = partition_of(batch[i].label, batch[i].ap_image, cfg.mode);
  }
  return frozen_harmonized_loss(batch, harmonize_weights(g, parts, cfg, ema));
}

}  // namespace

HarmonizedLoss frozen_harmonized_loss(std::span<const ClassificationExample> batch, const HarmonizedBatch& frozen) {
  if (batch.empty()) throw std::invalid_argument("harmonized loss: empty batch");
  if (frozen.examples.size() != batch.size()) throw std::invalid_argument("harmonized loss: weight count mismatch");
  HarmonizedLoss out;
  out.batch = frozen;
  out.grad_logit.resize(batch.size());
  const double scale = 1.0 / (static_cast<double>(frozen.distributions) * static_cast<double>(batch.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double beta = frozen.examples[i].beta;
    sum += beta * ce_loss(batch[i].pred, batch[i].label);
    out.grad_logit[i] = scale * beta * ce_grad_logit(batch[i].pred, batch[i].label);
  }
  out.loss = scale * sum;
  return out;
}

HarmonizedLoss ghm_c_loss(std::span<const ClassificationExample> batch, const HarmonizerConfig& cfg, DensityEma* ema) {
  HarmonizerConfig pooled = cfg;
  pooled.mode = HarmonizerMode::Ghm;
  return harmonized(batch, pooled, ema);
}

HarmonizedLoss dghm_c_loss(std::span<const ClassificationExample> batch, const HarmonizerConfig& cfg, DensityEma* ema) {
  if (cfg.mode == HarmonizerMode::Ghm) throw std::invalid_argument("dghm_c_loss: requires DGHM or DGHM_STAR mode");
  return harmonized(batch, cfg, ema);
}

}  // namespace dghm
