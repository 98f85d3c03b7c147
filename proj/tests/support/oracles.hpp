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

// Independent reference computations the tests compare the library against.
// Each one is written from the definition, in the slowest obvious way.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "dghm/geometry.hpp"
#include "dghm/harmonizer.hpp"
#include "dghm/metrics.hpp"

namespace dghm::oracle {

/// Bin k holds [k/n, (k+1)/n); the last bin also holds 1.
inline bool same_bin(double a, double b, int n) {
  for (int k = 0; k < n; ++k) {
    const double lo = static_cast<double>(k) / n;
    const double hi = static_cast<double>(k + 1) / n;
    const bool in_a = a >= lo && (a < hi || (k == n - 1 && a <= 1.0));
    const bool in_b = b >= lo && (b < hi || (k == n - 1 && b <= 1.0));
    if (in_a || in_b) return in_a && in_b;
  }
  return false;
}

/// Sum over every example k of delta(g_k, g_i), divided by the clipped
/// region length around g_i. O(N) per query, O(N^2) per batch.
inline double gradient_density(std::span<const double> g, std::size_t i, int n) {
  double count = 0.0;
  for (double gk : g) count += same_bin(gk, g[i], n) ? 1.0 : 0.0;
  const double eps = 1.0 / n;
  const double len = std::min(g[i] + eps / 2.0, 1.0) - std::max(g[i] - eps / 2.0, 0.0);
  return count / len;
}

/// beta_i with every density computed within the example's own partition.
inline std::vector<double> harmonized_weights(std::span<const double> g, std::span<const Partition> parts,
                                              const HarmonizerConfig& cfg) {
  std::vector<double> beta(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::vector<double> same;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (cfg.mode == HarmonizerMode::Ghm || parts[k] == parts[i]) same.push_back(g[k]);
    }
    const auto it = std::find(same.begin(), same.end(), g[i]);
    const double gd = gradient_density(same, static_cast<std::size_t>(it - same.begin()), cfg.bin_count);
    double gamma = 1.0;
    if (cfg.mode != HarmonizerMode::Ghm && g[i] >= cfg.lambda) {
      gamma = parts[i] == Partition::Noisy || parts[i] == Partition::APn ? cfg.mu_n : cfg.mu_c;
    }
    const double n_prime =
        cfg.n_convention == NConvention::TotalN ? static_cast<double>(g.size()) : static_cast<double>(same.size());
    beta[i] = n_prime / std::pow(gd, gamma);
  }
  return beta;
}

/// Greedy matching recomputed at one threshold from scratch: keep detections
/// with score >= t, sort by score, and let each claim its best unclaimed gt.
struct SweepPoint {
  double recall = 0.0;
  double precision = 0.0;
  bool precision_undefined = true;
  double w = 0.0;
};

inline SweepPoint evaluate_at(std::span<const DetectionResult> dets, std::span<const SceneTruth> truth, double t) {
  std::size_t gts = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t np_dets = 0;
  std::size_t np_scenes = 0;
  for (const auto& s : truth) {
    std::vector<DetectionResult> kept;
    for (const auto& d : dets) {
      if (d.scene_id == s.scene_id && d.score >= t) kept.push_back(d);
    }
    if (!s.ap) {
      ++np_scenes;
      np_dets += kept.size();
      continue;
    }
    gts += s.gts.size();
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    std::vector<bool> used(s.gts.size(), false);
    for (const auto& d : kept) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t k = 0; k < s.gts.size(); ++k) {
        const double v = iou(d.box, s.gts[k]);
        if (!used[k] && v >= kMatchIou && v > best_iou) {
          best = static_cast<int>(k);
          best_iou = v;
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = true;
        ++tp;
      } else {
        ++fp;
      }
    }
  }
  SweepPoint p;
  p.recall = gts == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gts);
  p.precision_undefined = tp + fp == 0;
  p.precision = p.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  p.w = np_scenes == 0 ? 0.0 : static_cast<double>(np_dets) / static_cast<double>(np_scenes);
  return p;
}

inline std::vector<double> distinct_scores_desc(std::span<const DetectionResult> dets) {
  std::vector<double> s;
  for (const auto& d : dets) s.push_back(d.score);
  std::sort(s.begin(), s.end(), std::greater<>());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

/// FROC by exhaustive search: for each level, the recall at the lowest
/// threshold whose W stays within the level.
inline double froc(std::span<const DetectionResult> dets, std::span<const SceneTruth> truth,
                   std::span<const double> levels) {
  const auto thresholds = distinct_scores_desc(dets);
  double sum = 0.0;
  for (double level : levels) {
    double best = 0.0;
    double lowest = std::numeric_limits<double>::infinity();
    for (double t : thresholds) {
      const SweepPoint p = evaluate_at(dets, truth, t);
      if (p.w <= level && t < lowest) {
        lowest = t;
        best = p.recall;
      }
    }
    sum += best;
  }
  return levels.empty() ? 0.0 : sum / static_cast<double>(levels.size());
}

struct OperatingOracle {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  bool fallback = false;
};

inline OperatingOracle operating_point(std::span<const DetectionResult> dets, std::span<const SceneTruth> truth,
                                       double min_precision) {
  const auto thresholds = distinct_scores_desc(dets);
  OperatingOracle out;
  bool found = false;
  for (double t : thresholds) {
    const SweepPoint p = evaluate_at(dets, truth, t);
    if (!p.precision_undefined && p.precision >= min_precision) {
      out = {t, p.recall, p.precision, false};
      found = true;
    }
  }
  if (found) return out;
  // Highest precision; ties go to the lower threshold.
  double best_p = -1.0;
  for (double t : thresholds) {
    const SweepPoint p = evaluate_at(dets, truth, t);
    if (p.precision >= best_p) {
      best_p = p.precision;
      out = {t, p.recall, p.precision, true};
    }
  }
  return out;
}

/// Maximum-cardinality matching at IoU >= thr by exhaustive search (small
/// inputs only).
inline std::size_t optimal_match_count(std::span<const DetectionResult> dets, std::span<const Box> gts, double thr) {
  std::vector<bool> used(gts.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == dets.size()) return 0;
    std::size_t best = go(i + 1);
    for (std::size_t k = 0; k < gts.size(); ++k) {
      if (!used[k] && iou(dets[i].box, gts[k]) >= thr) {
        used[k] = true;
        best = std::max(best, 1 + go(i + 1));
        used[k] = false;
      }
    }
    return best;
  };
  return go(0);
}

}  // namespace dghm::oracle
