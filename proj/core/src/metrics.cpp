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

#include "dghm/metrics.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dghm/text.hpp"

namespace dghm {

namespace {

// Indices of `dets` in descending score order; ties keep input order.
std::vector<std::size_t> score_order(std::span<const DetectionResult> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

std::vector<DetectionResult> decode_and_suppress(std::span<const RawPrediction> raw, double threshold,
                                                 double nms_iou) {
  std::map<std::uint32_t, std::vector<DetectionResult>> per_scene;
  for (const auto& r : raw) {
    if (r.score < threshold) continue;
    per_scene[r.scene_id].push_back({r.scene_id, decode_offsets(r.anchor, r.offsets), r.score});
  }
  std::vector<DetectionResult> out;
  for (auto& [scene, cands] : per_scene) {
    const auto order = score_order(cands);
    const std::size_t first = out.size();
    for (std::size_t idx : order) {
      const DetectionResult& d = cands[idx];
      const bool suppressed = std::any_of(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                                          [&](const DetectionResult& k) { return iou(k.box, d.box) > nms_iou; });
      if (!suppressed) out.push_back(d);
    }
  }
  return out;
}

MatchReport match_detections(std::span<const DetectionResult> dets, std::span<const Box> gts, double iou_thr) {
  MatchReport r;
  r.matched.assign(dets.size(), false);
  std::vector<bool> claimed(gts.size(), false);
  for (std::size_t idx : score_order(dets)) {
    double best = iou_thr;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g]) continue;
      const double v = iou(dets[idx].box, gts[g]);
      if (v >= best && (best_gt == gts.size() || v > best)) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt != gts.size()) {
      claimed[best_gt] = true;
      r.matched[idx] = true;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = gts.size() - r.tp;
  return r;
}

FlaggedRate recall(const MatchReport& r) {
  const std::size_t d = r.tp + r.fn;
  if (d == 0) return {0.0, true};
  return {static_cast<double>(r.tp) / static_cast<double>(d), false};
}

FlaggedRate precision(const MatchReport& r) {
  const std::size_t d = r.tp + r.fp;
  if (d == 0) return {0.0, true};
  return {static_cast<double>(r.tp) / static_cast<double>(d), false};
}

double nfps_from_w(double w) { return std::max(100.0 - w, 0.0); }

double nfps(std::span<const DetectionResult> np_detections, std::size_t np_scene_count, double threshold) {
  if (np_scene_count == 0) throw std::invalid_argument("nfps: no NP scenes");
  const auto n = std::count_if(np_detections.begin(), np_detections.end(),
                               [&](const DetectionResult& d) { return d.score >= threshold; });
  return nfps_from_w(static_cast<double>(n) / static_cast<double>(np_scene_count));
}

ThresholdSweep::ThresholdSweep(std::span<const DetectionResult> dets, std::span<const SceneTruth> truth,
                               double iou_thr) {
  std::map<std::uint32_t, const SceneTruth*> by_id;
  for (const auto& t : truth) {
    if (!by_id.emplace(t.scene_id, &t).second) throw std::invalid_argument("ThresholdSweep: duplicate scene id");
    if (t.ap) {
      gt_count_ += t.gts.size();
    } else {
      ++np_scenes_;
    }
  }
  std::map<std::uint32_t, std::vector<DetectionResult>> per_scene;
  for (const auto& d : dets) {
    if (!by_id.contains(d.scene_id)) throw std::invalid_argument("ThresholdSweep: detection for unknown scene");
    per_scene[d.scene_id].push_back(d);
  }

  struct Scored {
    double score;
    bool tp;
    bool ap;
  };
  std::vector<Scored> all;
  all.reserve(dets.size());
  for (const auto& [id, sd] : per_scene) {
    const SceneTruth& t = *by_id.at(id);
    if (t.ap) {
      const MatchReport m = match_detections(sd, t.gts, iou_thr);
      for (std::size_t i = 0; i < sd.size(); ++i) all.push_back({sd[i].score, m.matched[i], true});
    } else {
      for (const auto& d : sd) all.push_back({d.score, false, false});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t np = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].ap) {
      (all[i].tp ? tp : fp) += 1;
    } else {
      ++np;
    }
    if (i + 1 == all.size() || all[i + 1].score != all[i].score) {
      thresholds_.push_back(all[i].score);
      tp_.push_back(tp);
      ap_fp_.push_back(fp);
      np_det_.push_back(np);
    }
  }
}

FlaggedRate ThresholdSweep::recall_at(std::size_t k) const {
  if (gt_count_ == 0) return {0.0, true};
  return {static_cast<double>(tp_[k]) / static_cast<double>(gt_count_), false};
}

FlaggedRate ThresholdSweep::precision_at(std::size_t k) const {
  const std::size_t d = tp_[k] + ap_fp_[k];
  if (d == 0) return {0.0, true};
  return {static_cast<double>(tp_[k]) / static_cast<double>(d), false};
}

double ThresholdSweep::w_at(std::size_t k) const {
  if (np_scenes_ == 0) return 0.0;
  return static_cast<double>(np_det_[k]) / static_cast<double>(np_scenes_);
}

double froc(const ThresholdSweep& sweep, std::span<const double> levels, FrocLevelMode mode) {
  if (levels.empty()) throw std::invalid_argument("froc: no levels");
  if (sweep.empty()) return 0.0;
  double sum = 0.0;
  for (double level : levels) {
    const double w_cap = mode == FrocLevelMode::FalsePositivesPerImage ? level : 100.0 - level;
    // W is nondecreasing as k grows (thresholds descend); take the last k
    // still within the cap. If even the top threshold exceeds it, recall is 0.
    double r = 0.0;
    for (std::size_t k = 0; k < sweep.size(); ++k) {
      if (sweep.w_at(k) > w_cap) break;
      r = sweep.recall_at(k).value;
    }
    sum += r;
  }
  return sum / static_cast<double>(levels.size());
}

OperatingPoint operating_point(const ThresholdSweep& sweep, double min_precision) {
  if (sweep.empty()) throw std::invalid_argument("operating_point: no detections");
  auto at = [&](std::size_t k, bool fallback) {
    return OperatingPoint{sweep.threshold(k), sweep.recall_at(k).value, sweep.precision_at(k).value,
                          nfps_from_w(sweep.w_at(k)), fallback};
  };
  for (std::size_t k = sweep.size(); k-- > 0;) {
    const FlaggedRate p = sweep.precision_at(k);
    if (!p.undefined && p.value >= min_precision) return at(k, false);
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < sweep.size(); ++k) {
    if (sweep.precision_at(k).value >= sweep.precision_at(best).value) best = k;
  }
  return at(best, true);
}

TrainingRecall t_r_recall(std::span<const DetectionResult> dets, std::span<const TrainingScene> scenes,
                          double threshold, double iou_thr) {
  std::map<std::uint32_t, std::vector<DetectionResult>> per_scene;
  for (const auto& d : dets) {
    if (d.score >= threshold) per_scene[d.scene_id].push_back(d);
  }
  std::size_t kept_total = 0;
  std::size_t kept_hit = 0;
  std::size_t removed_total = 0;
  std::size_t removed_hit = 0;
  static const std::vector<DetectionResult> kNone;
  for (const auto& s : scenes) {
    auto it = per_scene.find(s.scene_id);
    const auto& sd = it == per_scene.end() ? kNone : it->second;
    kept_total += s.kept.size();
    removed_total += s.removed.size();
    kept_hit += match_detections(sd, s.kept, iou_thr).tp;
    removed_hit += match_detections(sd, s.removed, iou_thr).tp;
  }
  TrainingRecall out;
  out.t_undefined = kept_total == 0;
  out.r_undefined = removed_total == 0;
  if (!out.t_undefined) out.t_recall = static_cast<double>(kept_hit) / static_cast<double>(kept_total);
  if (!out.r_undefined) out.r_recall = static_cast<double>(removed_hit) / static_cast<double>(removed_total);
  return out;
}

bool MetricsReport::has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

void write_metrics_report(std::ostream& out, const MetricsReport& r) {
  out << "recall=" << fmt_double(r.recall) << '\n'
      << "precision=" << fmt_double(r.precision) << '\n'
      << "nfps=" << fmt_double(r.nfps) << '\n'
      << "froc=" << fmt_double(r.froc) << '\n'
      << "t_recall=" << fmt_double(r.t_recall) << '\n'
      << "r_recall=" << fmt_double(r.r_recall) << '\n'
      << "threshold=" << fmt_double(r.threshold) << '\n'
      << "flags=";
  for (std::size_t i = 0; i < r.flags.size(); ++i) out << (i ? "," : "") << r.flags[i];
  out << '\n';
}

MetricsReport read_metrics_report(std::istream& in) {
  MetricsReport r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("metrics report: malformed line '" + line + "'");
    const std::string_view key(line.data(), eq);
    const std::string_view value(line.data() + eq + 1, line.size() - eq - 1);
    if (key == "flags") {
      if (!value.empty()) {
        for (auto f : split(value, ',')) r.flags.emplace_back(f);
      }
      continue;
    }
    const double v = parse_double(value);
    if (key == "recall") r.recall = v;
    else if (key == "precision") r.precision = v;
    else if (key == "nfps") r.nfps = v;
    else if (key == "froc") r.froc = v;
    else if (key == "t_recall") r.t_recall = v;
    else if (key == "r_recall") r.r_recall = v;
    else if (key == "threshold") r.threshold = v;
    else throw std::runtime_error("metrics report: unknown key '" + std::string(key) + "'");
  }
  return r;
}

}  // namespace dghm
