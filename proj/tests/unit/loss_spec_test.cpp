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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "dghm/loss_spec.hpp"
#include "dghm/rng.hpp"
#include "dghm/trainer.hpp"

namespace dghm {
namespace {

std::vector<ClassificationExample> random_examples(Rng& rng, std::size_t n) {
  std::vector<ClassificationExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({Prediction::from_logit(rng.uniform(-6, 6)), label_from_bit(static_cast<int>(rng.index(2))),
                   rng.index(2) == 1});
  }
  return out;
}

TEST(LossSpecTest, NamesRoundTrip) {
  for (auto k : {LossKind::CE, LossKind::Focal, LossKind::SCE, LossKind::GhmC, LossKind::DghmC, LossKind::DghmCStar}) {
    EXPECT_EQ(loss_kind_from_string(to_string(k)), k);
  }
  EXPECT_EQ(to_string(LossKind::DghmCStar), "DGHM-C*");
  EXPECT_FALSE(loss_kind_from_string("dghm").has_value());
  EXPECT_EQ(LossSpec::of(LossKind::GhmC).effective_harmonizer().mode, HarmonizerMode::Ghm);
  EXPECT_EQ(LossSpec::of(LossKind::DghmC).effective_harmonizer().mode, HarmonizerMode::Dghm);
  EXPECT_EQ(LossSpec::of(LossKind::DghmCStar).effective_harmonizer().mode, HarmonizerMode::DghmStar);
}

TEST(ClassificationLossTest, ClosedFormIsBatchMean) {
  Rng rng(1);
  const auto batch = random_examples(rng, 17);
  const auto spec = LossSpec::of(LossKind::Focal);
  const auto r = classification_loss(batch, spec);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sum += focal_loss(batch[i].pred, batch[i].label, spec.focal);
    EXPECT_NEAR(r.grad_logit[i], focal_grad_logit(batch[i].pred, batch[i].label, spec.focal) / 17.0, 1e-15);
  }
  EXPECT_NEAR(r.loss, sum / 17.0, 1e-14);
  EXPECT_FALSE(r.weights.has_value());
}

TEST(ClassificationLossTest, HarmonizedMatchesDirectCall) {
  Rng rng(2);
  const auto batch = random_examples(rng, 32);
  const auto spec = LossSpec::of(LossKind::DghmC);
  const auto r = classification_loss(batch, spec);
  const auto d = dghm_c_loss(batch, spec.effective_harmonizer());
  EXPECT_EQ(r.loss, d.loss);
  ASSERT_TRUE(r.weights.has_value());
  const auto g = classification_loss(batch, LossSpec::of(LossKind::GhmC));
  EXPECT_EQ(g.loss, ghm_c_loss(batch, {}).loss);
}

TEST(ClassificationLossTest, ZeroWeightsGiveZeroGradient) {
  Rng rng(3);
  const auto batch = random_examples(rng, 8);
  auto frozen = classification_loss(batch, LossSpec::of(LossKind::DghmC)).weights.value();
  for (auto& e : frozen.examples) e.beta = 0.0;
  const auto r = classification_loss(batch, LossSpec::of(LossKind::DghmC), nullptr, &frozen);
  for (double g : r.grad_logit) EXPECT_EQ(g, 0.0);
}

TEST(RegroupTest, CollapsesThreeWay) {
  HistogramSet three;
  three.try_emplace(Partition::APp, 10).first->second.add(0.1);
  three.try_emplace(Partition::NPn, 10).first->second.add(0.1);
  three.try_emplace(Partition::APn, 10).first->second.add(0.9);
  const auto two = regroup(three, HarmonizerMode::Dghm);
  EXPECT_EQ(two.at(Partition::Clean).count_in_bin(1), 2U);
  EXPECT_EQ(two.at(Partition::Noisy).count_in_bin(9), 1U);
  const auto one = regroup(three, HarmonizerMode::Ghm);
  EXPECT_EQ(one.at(Partition::Pooled).total(), 3U);
  EXPECT_EQ(regroup(three, HarmonizerMode::DghmStar), three);
}

HistogramSet fixed_context() {
  HistogramSet h;
  auto& clean = h.try_emplace(Partition::APp, 10).first->second;
  auto& noisy = h.try_emplace(Partition::APn, 10).first->second;
  auto& np = h.try_emplace(Partition::NPn, 10).first->second;
  for (int i = 0; i < 50; ++i) np.add(0.02);
  for (int i = 0; i < 10; ++i) clean.add(0.3 + 0.05 * (i % 5));
  for (int i = 0; i < 30; ++i) noisy.add(0.04);
  for (int i = 0; i < 6; ++i) noisy.add(0.93);
  return h;
}

TEST(CurveTest, CeIsIdentity) {
  const auto c = reformulated_gradient_curve(LossSpec::of(LossKind::CE), {}, Partition::Pooled);
  ASSERT_EQ(c.size(), 101U);
  for (const auto& pt : c) EXPECT_EQ(pt.value, pt.g);
  EXPECT_DOUBLE_EQ(c[50].g, 0.5);
  EXPECT_DOUBLE_EQ(c[50].value, 0.5);
}

TEST(CurveTest, FocalModulation) {
  auto spec = LossSpec::of(LossKind::Focal);
  spec.focal = {1.0, 2.0};
  const auto c = reformulated_gradient_curve(spec, {}, Partition::Pooled);
  EXPECT_GT(c.back().value, c.front().value);
  EXPECT_LT(c[10].value, c[10].g);
}

TEST(CurveTest, NoisyBranchDropsAtLambda) {
  const auto ctx = fixed_context();
  auto spec = LossSpec::of(LossKind::DghmC);
  auto unit = spec;
  unit.harmonizer.mu_n = 1.0;
  const auto mod = reformulated_gradient_curve(spec, ctx, Partition::Noisy);
  const auto ref = reformulated_gradient_curve(unit, ctx, Partition::Noisy);
  // Below lambda the curves coincide; at and above it the modulated one drops.
  for (std::size_t j = 0; j < mod.size(); ++j) {
    if (mod[j].g < 0.9) EXPECT_EQ(mod[j].value, ref[j].value);
    else EXPECT_LT(mod[j].value, ref[j].value);
  }
  // Crossing lambda: g = 0.89 sits in an empty bin, g = 0.90 in the outlier bin.
  EXPECT_LT(mod[90].value, 0.5 * mod[89].value);
}

TEST(CurveTest, RecomputesFromStoredHistogram) {
  const auto ctx = fixed_context();
  std::stringstream ss;
  write_histogram_csv(ss, "DGHM_STAR", ctx);
  const auto back = read_histogram_csv(ss, "DGHM_STAR");
  EXPECT_EQ(back, ctx);
  for (auto kind : {LossKind::GhmC, LossKind::DghmC}) {
    const auto spec = LossSpec::of(kind);
    for (auto branch : {Partition::Clean, Partition::Noisy}) {
      const auto a = reformulated_gradient_curve(spec, ctx, branch);
      const auto b = reformulated_gradient_curve(spec, back, branch);
      for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].value, b[j].value);
    }
  }
}

TEST(CurveTest, CsvFormat) {
  std::stringstream ss;
  const std::vector<CurvePoint> c{{0.0, 0.0}, {0.5, 0.25}};
  write_curve_csv(ss, "CE", c);
  EXPECT_EQ(ss.str(), "loss_name,g,effective_gradient\nCE,0,0\nCE,0.5,0.25\n");
}

}  // namespace
}  // namespace dghm
