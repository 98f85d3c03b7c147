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

#include "dghm/model.hpp"

namespace dghm {
namespace {

constexpr std::size_t kDim = 6;

struct Fixture {
  std::vector<std::vector<double>> features;
  std::vector<TrainingExample> batch;
};

Fixture random_batch(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Fixture f;
  f.features.resize(n);
  for (auto& row : f.features) {
    row.resize(kDim);
    for (double& x : row) x = rng.normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.features = f.features[i];
    ex.label = label_from_bit(i % 4 == 0);
    ex.ap_image = i % 3 != 2 || ex.label == Label::Positive;
    for (double& t : ex.targets) t = rng.uniform(-0.5, 0.5);
    f.batch.push_back(ex);
  }
  return f;
}

Predictor random_model(std::uint64_t seed, std::vector<std::size_t> hidden = {8}) {
  Rng rng(seed);
  Predictor m(kDim, hidden, rng);
  // Give the heads non-zero weights so every parameter carries gradient.
  for (const auto& layer : std::span(m.layers()).last(2)) {
    for (std::size_t k = 0; k < layer.param_count(); ++k) m.params()[layer.offset + k] = rng.uniform(-0.5, 0.5);
  }
  return m;
}

// Independent evaluation of the plain CE objective from forward() and the
// per-example kernels.
double ce_objective(const Predictor& m, std::span<const TrainingExample> batch, double rw) {
  double cls = 0.0;
  double reg = 0.0;
  std::size_t pos = 0;
  for (const auto& ex : batch) {
    const PredictorOutput o = m.forward(ex.features);
    cls += ce_loss(Prediction::from_logit(o.logit), ex.label);
    if (ex.label == Label::Positive) {
      ++pos;
      for (std::size_t k = 0; k < 4; ++k) reg += smooth_l1(o.offsets[k], ex.targets[k]);
    }
  }
  return cls / static_cast<double>(batch.size()) + rw * reg / static_cast<double>(std::max<std::size_t>(pos, 1));
}

TEST(PredictorTest, ZeroHeadsGiveHalfProbability) {
  Rng rng(1);
  const Predictor m(kDim, std::vector<std::size_t>{8}, rng);
  const auto f = random_batch(2, 3);
  for (const auto& ex : f.batch) {
    const auto o = m.forward(ex.features);
    EXPECT_EQ(o.logit, 0.0);
    for (double v : o.offsets) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(m.layers().size(), 3U);
  EXPECT_EQ(m.params().size(), (kDim * 8 + 8) + (8 + 1) + (8 * 4 + 4));
}

TEST(PredictorTest, DeterministicInit) {
  Rng a(9);
  Rng b(9);
  Rng c(10);
  const std::vector<std::size_t> h{8, 4};
  EXPECT_EQ(Predictor(kDim, h, a), Predictor(kDim, h, b));
  Rng a2(9);
  EXPECT_NE(Predictor(kDim, h, a2), Predictor(kDim, h, c));
}

TEST(PredictorTest, BatchMatchesSingle) {
  const Predictor m = random_model(3, {5, 4});
  const auto f = random_batch(4, 7);
  std::vector<double> rows;
  for (const auto& r : f.features) rows.insert(rows.end(), r.begin(), r.end());
  const auto out = m.forward_batch(rows);
  ASSERT_EQ(out.size(), 7U);
  for (std::size_t i = 0; i < 7; ++i) {
    const auto one = m.forward(f.features[i]);
    EXPECT_EQ(out[i].logit, one.logit);
    EXPECT_EQ(out[i].offsets, one.offsets);
  }
}

TEST(PredictorTest, DimensionMismatchThrows) {
  const Predictor m = random_model(3);
  const std::vector<double> wrong(kDim + 1, 0.0);
  EXPECT_THROW(m.forward(wrong), std::invalid_argument);
  EXPECT_THROW(m.forward_batch(std::span(wrong).first(kDim + 1)), std::invalid_argument);
}

TEST(BackwardTest, MatchesIndependentCentralDifference) {
  const Predictor m = random_model(5);
  const auto f = random_batch(6, 16);
  const double rw = 0.7;
  const BatchGradient bg = backward(m, f.batch, LossSpec::of(LossKind::CE), rw);
  EXPECT_NEAR(bg.loss, ce_objective(m, f.batch, rw), 1e-12);
  Predictor probe = m;
  const double h = 1e-6;
  for (std::size_t k = 0; k < probe.params().size(); ++k) {
    const double x = probe.params()[k];
    probe.params()[k] = x + h;
    const double plus = ce_objective(probe, f.batch, rw);
    probe.params()[k] = x - h;
    const double minus = ce_objective(probe, f.batch, rw);
    probe.params()[k] = x;
    const double numeric = (plus - minus) / (2 * h);
    EXPECT_NEAR(bg.grad[k], numeric, 1e-6 * std::max({1.0, std::abs(numeric)})) << k;
  }
}

class AllLosses : public ::testing::TestWithParam<LossKind> {};

TEST_P(AllLosses, FiniteDifferenceWithinTolerance) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Predictor m = random_model(100 + s, s % 2 ? std::vector<std::size_t>{6, 5} : std::vector<std::size_t>{8});
    const auto f = random_batch(200 + s, 24);
    const auto r = finite_difference_check(m, f.batch, LossSpec::of(GetParam()), 1.0, {.seed = s});
    EXPECT_LT(r.max_relative_error, 1e-6) << to_string(GetParam()) << " seed " << s;
    EXPECT_GT(r.checked, 0U);
  }
}

TEST_P(AllLosses, GradientNormsAreCeMagnitudes) {
  const Predictor m = random_model(7);
  const auto f = random_batch(8, 12);
  const BatchGradient bg = backward(m, f.batch, LossSpec::of(GetParam()));
  ASSERT_EQ(bg.gradient_norms.size(), 12U);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto pred = Prediction::from_logit(m.forward(f.batch[i].features).logit);
    EXPECT_DOUBLE_EQ(bg.gradient_norms[i], gradient_norm(pred, f.batch[i].label));
  }
  EXPECT_EQ(bg.weights.has_value(), LossSpec::of(GetParam()).harmonized());
}

INSTANTIATE_TEST_SUITE_P(Losses, AllLosses,
                         ::testing::Values(LossKind::CE, LossKind::Focal, LossKind::SCE, LossKind::GhmC,
                                           LossKind::DghmC, LossKind::DghmCStar),
                         [](const auto& info) {
                           std::string s(to_string(info.param));
                           for (char& c : s) {
                             if (c == '-') c = '_';
                             if (c == '*') c = 'S';
                           }
                           return s;
                         });

TEST(BackwardTest, ZeroWeightsFreezeClassification) {
  const Predictor m = random_model(11);
  const auto f = random_batch(12, 8);
  const LossSpec spec = LossSpec::of(LossKind::DghmC);
  HarmonizedBatch frozen = *backward(m, f.batch, spec).weights;
  for (auto& e : frozen.examples) e.beta = 0.0;
  const BatchGradient bg = backward(m, f.batch, spec, 0.0, nullptr, &frozen);
  EXPECT_EQ(bg.classification_loss, 0.0);
  for (double g : bg.grad) EXPECT_EQ(g, 0.0);
}

TEST(BackwardTest, NoPositivesNoRegressionGradient) {
  const Predictor m = random_model(13);
  auto f = random_batch(14, 8);
  for (auto& ex : f.batch) ex.label = Label::Negative;
  const BatchGradient bg = backward(m, f.batch, LossSpec::of(LossKind::CE), 1.0);
  EXPECT_EQ(bg.regression_loss, 0.0);
  const LayerShape& reg_head = m.layers().back();
  for (std::size_t k = 0; k < reg_head.param_count(); ++k) EXPECT_EQ(bg.grad[reg_head.offset + k], 0.0);
}

TEST(BackwardTest, KinkIsExcludedFromCheck) {
  Predictor m = random_model(15);
  auto f = random_batch(16, 4);
  // Place a positive's residual exactly on the smooth-L1 transition.
  f.batch[0].targets[0] = m.forward(f.batch[0].features).offsets[0] - 1.0;
  const auto r = finite_difference_check(m, f.batch, LossSpec::of(LossKind::CE));
  EXPECT_GT(r.excluded, 0U);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(AdamTest, ZeroGradientIsFixedPoint) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState adam(3);
  for (int i = 0; i < 5; ++i) adam.step(p, g, 0.1);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(adam.steps(), 5U);
}

TEST(AdamTest, FirstStepClosedForm) {
  std::vector<double> p{1.0, 1.0};
  const std::vector<double> g{0.5, -2.0};
  AdamState adam(2);
  adam.step(p, g, 0.01);
  // Bias correction makes the first update lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_DOUBLE_EQ(adam.first_moment()[0], 0.05);
  EXPECT_DOUBLE_EQ(adam.second_moment()[1], 0.001 * 4.0);
}

TEST(CheckpointTest, RoundTripIsExact) {
  const Predictor m = random_model(17, {7, 3});
  std::stringstream ss;
  write_checkpoint(ss, m);
  EXPECT_EQ(read_checkpoint(ss), m);
  std::stringstream bad("not a checkpoint\n");
  EXPECT_THROW(read_checkpoint(bad), std::runtime_error);
  std::stringstream cut;
  write_checkpoint(cut, m);
  std::string text = cut.str();
  text.resize(text.size() / 2);
  std::stringstream half(text);
  EXPECT_THROW(read_checkpoint(half), std::runtime_error);
}

}  // namespace
}  // namespace dghm
