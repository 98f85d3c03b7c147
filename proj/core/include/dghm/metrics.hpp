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

// Instance-level detection metrics for partially annotated data.
//
// Recall is measured on AP scenes at IoU 0.3; NP scenes only contribute
// false positives (W = detections per NP scene, NFPs = max(100 - W, 0)).
// FROC averages recall at the thresholds where W reaches 1, 2, 4, 8, 16 and
// 32. Greedy score-ordered matching means the matching at any threshold is
// a prefix of the matching at the lowest one, so one sorted pass yields
// every threshold.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dghm/geometry.hpp"

namespace dghm {

struct RawPrediction {
  std::uint32_t scene_id = 0;
  Box anchor;
  double score = 0.0;
  std::array<double, 4> offsets{};
};

struct DetectionResult {
  std::uint32_t scene_id = 0;
  Box box;
  double score = 0.0;
};

/// Decodes offsets, drops scores below `threshold` and runs greedy NMS per
/// scene. Output is grouped by ascending scene id, descending score within.
std::vector<DetectionResult> decode_and_suppress(std::span<const RawPrediction> raw, double threshold,
                                                 double nms_iou = 0.5);

struct MatchReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// matched[i]: detection i (in the caller's order) claimed a ground truth.
  std::vector<bool> matched;
};

inline constexpr double kMatchIou = 0.3;

/// Greedy one-to-one matching within a single scene: in descending score
/// order each detection claims the unmatched ground truth of highest IoU,
/// provided it is >= iou_thr.
MatchReport match_detections(std::span<const DetectionResult> dets, std::span<const Box> gts,
                             double iou_thr = kMatchIou);

struct FlaggedRate {
  double value = 0.0;
  /// Zero denominator; value is 0 by convention.
  bool undefined = false;
};

FlaggedRate recall(const MatchReport& r);
FlaggedRate precision(const MatchReport& r);

/// max(100 - W, 0).
double nfps_from_w(double w);
/// W over the NP scenes at `threshold`; throws std::invalid_argument when
/// there are no NP scenes.
double nfps(std::span<const DetectionResult> np_detections, std::size_t np_scene_count, double threshold);

struct SceneTruth {
  std::uint32_t scene_id = 0;
  bool ap = false;
  std::vector<Box> gts;
};

/// Every distinct score threshold of a detection set, with running counts.
/// Entry k describes "keep every detection with score >= thresholds[k]";
/// thresholds are in descending order.
class ThresholdSweep {
 public:
  ThresholdSweep(std::span<const DetectionResult> dets, std::span<const SceneTruth> truth,
                 double iou_thr = kMatchIou);

  std::size_t size() const { return thresholds_.size(); }
  bool empty() const { return thresholds_.empty(); }
  double threshold(std::size_t k) const { return thresholds_[k]; }
  std::size_t tp(std::size_t k) const { return tp_[k]; }
  std::size_t ap_fp(std::size_t k) const { return ap_fp_[k]; }
  std::size_t np_detections(std::size_t k) const { return np_det_[k]; }
  std::size_t gt_count() const { return gt_count_; }
  std::size_t np_scene_count() const { return np_scenes_; }

  FlaggedRate recall_at(std::size_t k) const;
  FlaggedRate precision_at(std::size_t k) const;
  /// Mean detections per NP scene (0 when there are no NP scenes).
  double w_at(std::size_t k) const;

 private:
  std::vector<double> thresholds_;
  std::vector<std::size_t> tp_;
  std::vector<std::size_t> ap_fp_;
  std::vector<std::size_t> np_det_;
  std::size_t gt_count_ = 0;
  std::size_t np_scenes_ = 0;
};

enum class FrocLevelMode : std::uint8_t {
  /// Levels are false positives per NP scene (W <= level).
  FalsePositivesPerImage,
  /// Levels are NFPs scores (W <= 100 - level).
  NfpsScore,
};

inline constexpr std::array<double, 6> kFrocLevels{1, 2, 4, 8, 16, 32};

/// Mean over levels of the recall at the lowest threshold whose W does not
/// exceed the level. A level the detector never reaches uses the recall at
/// the lowest threshold; an empty detection set scores 0.
double froc(const ThresholdSweep& sweep, std::span<const double> levels = kFrocLevels,
            FrocLevelMode mode = FrocLevelMode::FalsePositivesPerImage);

struct OperatingPoint {
  double threshold = 1.0;
  double recall = 0.0;
  double precision = 0.0;
  double nfps = 100.0;
  /// No threshold reached the precision floor; reported at the threshold of
  /// maximum precision instead.
  bool fallback = false;
};

inline constexpr double kMinPrecision = 0.2;

/// Lowest threshold whose precision is >= min_precision. Throws
/// std::invalid_argument on an empty sweep.
OperatingPoint operating_point(const ThresholdSweep& sweep, double min_precision = kMinPrecision);

struct TrainingScene {
  std::uint32_t scene_id = 0;
  std::vector<Box> kept;
  std::vector<Box> removed;
};

struct TrainingRecall {
  double t_recall = 0.0;
  double r_recall = 0.0;
  bool t_undefined = false;
  bool r_undefined = false;
};

/// Recall against kept and removed annotations at `threshold`, each from its
/// own matching pass.
TrainingRecall t_r_recall(std::span<const DetectionResult> dets, std::span<const TrainingScene> scenes,
                          double threshold, double iou_thr = kMatchIou);

struct MetricsReport {
  double recall = 0.0;
  double precision = 0.0;
  double nfps = 100.0;
  double froc = 0.0;
  double t_recall = 0.0;
  double r_recall = 0.0;
  double threshold = 1.0;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

/// key=value lines in fixed order: recall, precision, nfps, froc, t_recall,
/// r_recall, threshold, flags (comma separated).
void write_metrics_report(std::ostream& out, const MetricsReport& r);
MetricsReport read_metrics_report(std::istream& in);

}  // namespace dghm
