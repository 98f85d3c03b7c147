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

#include <benchmark/benchmark.h>

#include <vector>

#include "dghm/harmonizer.hpp"
#include "dghm/metrics.hpp"
#include "dghm/model.hpp"
#include "dghm/sim.hpp"
#include "dghm/trainer.hpp"

namespace {

using namespace dghm;

void BM_HarmonizeWeights(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::vector<double> g(n);
  std::vector<Partition> parts(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = rng.uniform();
    parts[i] = rng.uniform() < 0.5 ? Partition::Clean : Partition::Noisy;
  }
  const HarmonizerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(harmonize_weights(g, parts, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HarmonizeWeights)->Arg(64)->Arg(1000)->Arg(100000);

void BM_Backward(benchmark::State& state) {
  const auto kind = static_cast<LossKind>(state.range(0));
  constexpr std::size_t kDim = 8;
  Rng rng(2);
  const Predictor model(kDim, std::vector<std::size_t>{16}, rng);
  std::vector<std::vector<double>> rows(64, std::vector<double>(kDim));
  std::vector<TrainingExample> batch(64);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (double& x : rows[i]) x = rng.normal();
    batch[i].features = rows[i];
    batch[i].label = label_from_bit(i % 4 == 0);
    batch[i].ap_image = i % 2 == 0;
  }
  const LossSpec spec = LossSpec::of(kind);
  state.SetLabel(std::string(spec.name()));
  for (auto _ : state) benchmark::DoNotOptimize(backward(model, batch, spec));
}
BENCHMARK(BM_Backward)->DenseRange(0, 5);

void BM_ThresholdSweep(benchmark::State& state) {
  Rng rng(3);
  std::vector<SceneTruth> truth;
  std::vector<DetectionResult> dets;
  for (std::uint32_t s = 0; s < 100; ++s) {
    SceneTruth t{s, s < 50, {}};
    if (t.ap) {
      for (int k = 0; k < 4; ++k) t.gts.push_back({rng.uniform(8, 56), rng.uniform(8, 56), 10, 10});
    }
    for (int k = 0; k < state.range(0); ++k) {
      dets.push_back({s, {rng.uniform(5, 59), rng.uniform(5, 59), 10, 10}, rng.uniform()});
    }
    truth.push_back(std::move(t));
  }
  for (auto _ : state) {
    const ThresholdSweep sweep(dets, truth);
    benchmark::DoNotOptimize(froc(sweep));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dets.size()));
}
BENCHMARK(BM_ThresholdSweep)->Arg(10)->Arg(50);

void BM_LabelScenes(benchmark::State& state) {
  const SceneSpec spec;
  const auto scenes = generate_corpus(spec, 8, 8, 4);
  for (auto _ : state) benchmark::DoNotOptimize(label_scenes(scenes, spec));
}
BENCHMARK(BM_LabelScenes);

void BM_TrainEpoch(benchmark::State& state) {
  const SceneSpec spec;
  const auto pool = label_scenes(generate_corpus(spec, 16, 16, 5), spec);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 64;
  cfg.epochs = 1;
  cfg.decay_epochs = {};
  cfg.batches_per_epoch = 100;
  cfg.loss = LossSpec::of(LossKind::DghmC);
  for (auto _ : state) benchmark::DoNotOptimize(train(pool, cfg));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
