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

#include "dghm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dghm {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kFeatureStream = 1;
constexpr std::uint64_t kHardStream = 2;
constexpr std::uint64_t kSceneStream = 3;

constexpr int kPlacementAttempts = 200;

}  // namespace

void SceneSpec::validate() const {
  if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("scene spec: extent must be positive");
  if (objects_min < 0 || objects_max < objects_min) throw std::invalid_argument("scene spec: empty object count range");
  if (!(object_size_min > 0.0) || object_size_max < object_size_min) {
    throw std::invalid_argument("scene spec: empty object size range");
  }
  if (object_size_max > width || object_size_max > height) {
    throw std::invalid_argument("scene spec: objects larger than the scene extent");
  }
  if (!(anchor_stride > 0.0)) throw std::invalid_argument("scene spec: anchor stride must be > 0");
  if (anchor_sizes.empty()) throw std::invalid_argument("scene spec: at least one anchor size is required");
  for (const auto& [w, h] : anchor_sizes) {
    if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("scene spec: anchor sizes must be positive");
  }
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) throw std::invalid_argument("scene spec: hard_fraction outside [0, 1]");
  if (noise_level < 0.0 || offset_noise < 0.0 || nuisance_level < 0.0) throw std::invalid_argument("scene spec: noise must be >= 0");
  if (noise_dims < 0) throw std::invalid_argument("scene spec: noise_dims must be >= 0");
}

std::size_t Scene::annotated_count() const {
  return static_cast<std::size_t>(std::count(annotated.begin(), annotated.end(), true));
}

Scene generate_scene(const SceneSpec& spec, ImageClass image_class, std::uint32_t scene_id, Rng& rng) {
  spec.validate();
  Scene scene;
  scene.id = scene_id;
  scene.image_class = image_class;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.seed = rng.bits();
  if (image_class == ImageClass::NP) return scene;

  const int n = rng.uniform_int(spec.objects_min, spec.objects_max);
  while (static_cast<int>(scene.gt_boxes.size()) < n) {
    Box placed;
    bool ok = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const double w = rng.uniform(spec.object_size_min, spec.object_size_max);
      const double h = rng.uniform(spec.object_size_min, spec.object_size_max);
      placed = {rng.uniform(0.5 * w, spec.width - 0.5 * w), rng.uniform(0.5 * h, spec.height - 0.5 * h), w, h};
      ok = std::none_of(scene.gt_boxes.begin(), scene.gt_boxes.end(),
                        [&](const Box& b) { return iou(b, placed) > spec.max_object_iou; });
    }
    // A crowded scene keeps the last candidate rather than looping forever.
    scene.gt_boxes.push_back(placed);
  }
  scene.annotated.assign(scene.gt_boxes.size(), true);
  return scene;
}

std::vector<Scene> generate_corpus(const SceneSpec& spec, int n_ap, int n_np, std::uint64_t seed) {
  if (n_ap < 0 || n_np < 0) throw std::invalid_argument("generate_corpus: negative scene count");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(n_ap + n_np));
  for (int i = 0; i < n_ap + n_np; ++i) {
    const auto id = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(seed, kSceneStream, id));
    scenes.push_back(generate_scene(spec, i < n_ap ? ImageClass::AP : ImageClass::NP, id, rng));
  }
  return scenes;
}

CorruptionResult corrupt_annotations(std::span<const Scene> scenes, const CorruptionSpec& spec) {
  if (!(spec.eta >= 0.0 && spec.eta <= 1.0)) throw std::invalid_argument("corrupt_annotations: eta outside [0, 1]");
  CorruptionResult out;
  out.scenes.assign(scenes.begin(), scenes.end());

  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (std::size_t s = 0; s < out.scenes.size(); ++s) {
    for (std::size_t b = 0; b < out.scenes[s].annotated.size(); ++b) {
      if (out.scenes[s].annotated[b]) kept.emplace_back(s, b);
    }
  }
  const auto n_remove = static_cast<std::size_t>(std::llround(spec.eta * static_cast<double>(kept.size())));
  Rng rng(spec.seed);
  rng.shuffle(std::span(kept));
  for (std::size_t i = 0; i < n_remove; ++i) {
    auto& scene = out.scenes[kept[i].first];
    scene.annotated[kept[i].second] = false;
    out.removed.push_back({scene.id, static_cast<std::uint32_t>(kept[i].second)});
  }
  std::sort(out.removed.begin(), out.removed.end());
  return out;
}

std::vector<Box> build_anchor_grid(const Scene& scene, const SceneSpec& spec) {
  if (!(spec.anchor_stride > 0.0)) throw std::invalid_argument("build_anchor_grid: stride must be > 0");
  auto axis = [&](double extent) {
    const int n = std::max(1, static_cast<int>(std::floor(extent / spec.anchor_stride)));
    const double offset = 0.5 * (extent - (n - 1) * spec.anchor_stride);
    std::vector<double> centres(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) centres[static_cast<std::size_t>(i)] = offset + i * spec.anchor_stride;
    return centres;
  };
  const auto xs = axis(scene.width);
  const auto ys = axis(scene.height);
  std::vector<Box> anchors;
  anchors.reserve(xs.size() * ys.size() * spec.anchor_sizes.size());
  for (const auto& [w, h] : spec.anchor_sizes) {
    for (double y : ys) {
      for (double x : xs) anchors.push_back(clip({x, y, w, h}, scene.width, scene.height));
    }
  }
  return anchors;
}

bool is_hard_object(const Scene& scene, std::size_t box_index, const SceneSpec& spec) {
  Rng rng(derive_seed(scene.seed, kHardStream, box_index));
  return rng.uniform() < spec.hard_fraction;
}

namespace {

struct BestMatch {
  double iou = 0.0;
  std::size_t index = 0;
  bool found = false;
};

BestMatch best_match(const Box& anchor, const Scene& scene, bool annotated_only) {
  BestMatch best;
  for (std::size_t b = 0; b < scene.gt_boxes.size(); ++b) {
    if (annotated_only && !scene.annotated[b]) continue;
    const double v = iou(anchor, scene.gt_boxes[b]);
    if (v > best.iou) best = {v, b, true};
  }
  return best;
}

}  // namespace

std::vector<double> extract_features(const Scene& scene, const Box& anchor, std::uint32_t anchor_index,
                                     const SceneSpec& spec) {
  Rng rng(derive_seed(scene.seed, kFeatureStream, anchor_index));
  std::vector<double> f(spec.feature_dim(), 0.0);
  const BestMatch best = best_match(anchor, scene, false);

  double signal = spec.signal_strength * best.iou;
  if (best.found && is_hard_object(scene, best.index, spec)) signal *= spec.hard_attenuation;
  f[kSignalChannel] = signal + spec.noise_level * rng.normal();
  f[kContextChannel] = (scene.is_ap() ? spec.context_shift : 0.0) + spec.noise_level * rng.normal();

  std::array<double, 4> offsets{};
  if (best.found) offsets = encode_offsets(anchor, scene.gt_boxes[best.index]);
  for (std::size_t k = 0; k < 4; ++k) f[kOffsetChannel + k] = offsets[k] + spec.offset_noise * rng.normal();
  for (std::size_t k = kNoiseChannel; k < f.size(); ++k) f[k] = spec.nuisance_level * rng.normal();
  return f;
}

std::vector<LabeledAnchor> assign_labels(std::span<const Box> anchors, const Scene& scene, const SceneSpec& spec) {
  std::vector<LabeledAnchor> out;
  out.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    LabeledAnchor a;
    a.scene_id = scene.id;
    a.anchor_index = static_cast<std::uint32_t>(i);
    a.anchor_box = anchors[i];
    a.ap_image = scene.is_ap();
    const BestMatch any = best_match(anchors[i], scene, false);
    const BestMatch annotated = best_match(anchors[i], scene, true);
    a.best_iou = any.iou;
    a.ideal_p_star = label_from_bit(any.found && any.iou >= 0.5);
    a.p_star = label_from_bit(annotated.found && annotated.iou >= 0.5);
    if (a.p_star == Label::Positive) a.targets = encode_offsets(anchors[i], scene.gt_boxes[annotated.index]);
    a.features = extract_features(scene, anchors[i], a.anchor_index, spec);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<LabeledAnchor> label_scenes(std::span<const Scene> scenes, const SceneSpec& spec) {
  std::vector<LabeledAnchor> out;
  for (const Scene& scene : scenes) {
    const auto anchors = build_anchor_grid(scene, spec);
    auto labeled = assign_labels(anchors, scene, spec);
    out.insert(out.end(), std::make_move_iterator(labeled.begin()), std::make_move_iterator(labeled.end()));
  }
  return out;
}

SamplingPool SamplingPool::from(std::span<const LabeledAnchor> pool) {
  SamplingPool out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool[i].p_star == Label::Positive ? out.positives : out.negatives).push_back(i);
  }
  return out;
}

namespace {

void draw_distinct(std::span<const std::size_t> from, std::size_t k, Rng& rng, std::vector<std::size_t>& into) {
  if (k >= from.size()) {
    into.insert(into.end(), from.begin(), from.end());
    return;
  }
  const std::size_t start = into.size();
  while (into.size() - start < k) {
    const std::size_t pick = from[rng.index(from.size())];
    if (std::find(into.begin() + static_cast<std::ptrdiff_t>(start), into.end(), pick) == into.end()) {
      into.push_back(pick);
    }
  }
}

}  // namespace

Minibatch sample_minibatch(const SamplingPool& pool, std::size_t batch_size, Rng& rng) {
  Minibatch out;
  if (batch_size == 0) return out;
  const std::size_t want_pos =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(batch_size) / 4.0)));
  std::size_t n_pos = want_pos;
  std::size_t n_neg = batch_size - std::min(want_pos, batch_size);
  if (pool.positives.size() < want_pos) {
    out.fallback = true;
    n_pos = pool.positives.size();
    n_neg = n_pos == 0 ? batch_size : 3 * n_pos;
  }
  draw_distinct(pool.positives, n_pos, rng, out.indices);
  draw_distinct(pool.negatives, n_neg, rng, out.indices);
  return out;
}

}  // namespace dghm
