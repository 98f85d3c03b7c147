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

// Synthetic partially annotated detection corpus.
//
// AP scenes hold a handful of objects, NP scenes none. Anchors on a regular
// grid are labelled positive when they overlap an *annotated* box at IoU >= 0.5,
// so dropping annotations turns true positives into AP negatives: the only
// place label noise can appear.
//
// Feature layout (see FeatureChannel):
//   signal   strength * IoU with the best-overlapping object, attenuated for
//            hard objects, plus noise
//   context  shifted for AP scenes (tissue appearance differs between AP and
//            NP images), plus noise
//   offsets  the four regression targets towards the best-overlapping object
//            (zero when there is none), plus noise
//   noise    `noise_dims` pure-noise channels

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dghm/geometry.hpp"
#include "dghm/loss_kernels.hpp"
#include "dghm/rng.hpp"

namespace dghm {

enum class ImageClass : std::uint8_t { NP = 0, AP = 1 };

enum FeatureChannel : std::size_t {
  kSignalChannel = 0,
  kContextChannel = 1,
  kOffsetChannel = 2,  // four consecutive channels
  kNoiseChannel = 6,
};

struct SceneSpec {
  double width = 64.0;
  double height = 64.0;
  int objects_min = 2;
  int objects_max = 6;
  double object_size_min = 8.0;
  double object_size_max = 12.0;
  /// Objects are rejected when they overlap an earlier one above this IoU.
  double max_object_iou = 0.1;
  double anchor_stride = 4.0;
  /// One (w, h) entry per anchor scale.
  std::vector<std::pair<double, double>> anchor_sizes{{10.0, 10.0}};

  double signal_strength = 1.0;
  double noise_level = 0.3;
  /// Fraction of objects whose anchors carry an attenuated signal.
  double hard_fraction = 0.3;
  double hard_attenuation = 0.3;
  double context_shift = 0.5;
  double offset_noise = 0.05;
  /// Label-free appearance channels: noise_dims of them at this scale.
  int noise_dims = 2;
  double nuisance_level = 0.3;

  std::size_t feature_dim() const { return kNoiseChannel + static_cast<std::size_t>(noise_dims); }
  /// Noise-free signal of a non-hard anchor sitting exactly at the positive IoU.
  double decision_margin() const { return 0.5 * signal_strength; }

  /// Throws std::invalid_argument for empty ranges, non-positive stride or
  /// objects that cannot fit the extent.
  void validate() const;
};

struct Scene {
  std::uint32_t id = 0;
  ImageClass image_class = ImageClass::NP;
  double width = 64.0;
  double height = 64.0;
  /// Drives every per-anchor random draw (features, hardness).
  std::uint64_t seed = 0;
  std::vector<Box> gt_boxes;
  std::vector<bool> annotated;

  bool is_ap() const { return image_class == ImageClass::AP; }
  std::size_t annotated_count() const;
  bool operator==(const Scene&) const = default;
};

struct CorruptionSpec {
  double eta = 0.0;
  std::uint64_t seed = 0;
};

struct RemovedAnnotation {
  std::uint32_t scene_id = 0;
  std::uint32_t box_index = 0;
  auto operator<=>(const RemovedAnnotation&) const = default;
};

struct CorruptionResult {
  std::vector<Scene> scenes;
  std::vector<RemovedAnnotation> removed;
};

struct LabeledAnchor {
  std::uint32_t scene_id = 0;
  std::uint32_t anchor_index = 0;
  Box anchor_box;
  std::vector<double> features;
  Label p_star = Label::Negative;
  Label ideal_p_star = Label::Negative;
  bool ap_image = false;
  double best_iou = 0.0;
  /// Regression targets towards the best annotated match; meaningful when
  /// p_star is positive.
  std::array<double, 4> targets{};
};

/// Objects are placed inside the extent with rejection on overlap. Throws on
/// an invalid spec.
Scene generate_scene(const SceneSpec& spec, ImageClass image_class, std::uint32_t scene_id, Rng& rng);

/// `n_ap` AP scenes (ids 0..n_ap-1) then `n_np` NP scenes, each drawn from its
/// own stream derived from (seed, scene id).
std::vector<Scene> generate_corpus(const SceneSpec& spec, int n_ap, int n_np, std::uint64_t seed);

/// Drops round(eta * annotated) annotations chosen uniformly over the whole
/// corpus. The removed list is sorted by (scene, box).
CorruptionResult corrupt_annotations(std::span<const Scene> scenes, const CorruptionSpec& spec);

/// Regular grid, centred in the extent, one anchor per (position, size);
/// anchors are clipped to the extent.
std::vector<Box> build_anchor_grid(const Scene& scene, const SceneSpec& spec);

/// Whether object `box_index` of `scene` is a hard example.
bool is_hard_object(const Scene& scene, std::size_t box_index, const SceneSpec& spec);

std::vector<double> extract_features(const Scene& scene, const Box& anchor, std::uint32_t anchor_index,
                                     const SceneSpec& spec);

/// Labels every anchor of the scene and attaches features.
std::vector<LabeledAnchor> assign_labels(std::span<const Box> anchors, const Scene& scene, const SceneSpec& spec);

/// build_anchor_grid + assign_labels over many scenes, concatenated in order.
std::vector<LabeledAnchor> label_scenes(std::span<const Scene> scenes, const SceneSpec& spec);

/// Positive / negative index lists over a labelled pool.
struct SamplingPool {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  static SamplingPool from(std::span<const LabeledAnchor> pool);
};

struct Minibatch {
  std::vector<std::size_t> indices;
  /// True when the pool could not supply the 1:3 positive share.
  bool fallback = false;
};

/// 1:3 positive to negative batch (positives = round(batch_size / 4), at
/// least one when available). Negatives are drawn uniformly from every
/// negative anchor, AP and NP alike. With too few positives the batch holds
/// all of them plus three negatives each; with none it is all negative.
Minibatch sample_minibatch(const SamplingPool& pool, std::size_t batch_size, Rng& rng);

}  // namespace dghm
