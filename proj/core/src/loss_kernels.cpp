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

#include "dghm/loss_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dghm {

double sigmoid(double logit) {
  if (logit >= 0.0) {
    return 1.0 / (1.0 + std::exp(-logit));
  }
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

double clamp_probability(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

Prediction Prediction::from_logit(double logit) { return {logit, clamp_probability(sigmoid(logit))}; }

Prediction Prediction::from_probability(double p) {
  const double q = clamp_probability(p);
  return {std::log(q) - std::log1p(-q), q};
}

double ce_loss(const Prediction& pred, Label label) {
  return label == Label::Positive ? -std::log(pred.p) : -std::log1p(-pred.p);
}

double gradient_norm(const Prediction& pred, Label label) {
  // Clamped p never reaches 0 or 1; snap the residual so p == p* maps to 0.
  const double g = std::abs(pred.p - as_real(label));
  return g <= kProbEpsilon ? 0.0 : std::min(g, 1.0);
}

double ce_grad_logit(const Prediction& pred, Label label) { return pred.p - as_real(label); }

namespace {

double alpha_t(Label label, double alpha) { return label == Label::Positive ? alpha : 1.0 - alpha; }

// d g / d logit = s * p (1 - p), with s = -1 for positives and +1 for negatives.
double label_sign(Label label) { return label == Label::Positive ? -1.0 : 1.0; }

}  // namespace

double focal_loss(const Prediction& pred, Label label, const FocalParams& params) {
  const double g = std::abs(pred.p - as_real(label));
  return alpha_t(label, params.alpha) * std::pow(g, params.gamma) * ce_loss(pred, label);
}

double focal_grad_logit(const Prediction& pred, Label label, const FocalParams& params) {
  // L = a g^y CE  ->  dL/dz = s a g^y (y (1 - g) CE + g)
  const double g = std::abs(pred.p - as_real(label));
  const double ce = ce_loss(pred, label);
  return label_sign(label) * alpha_t(label, params.alpha) * std::pow(g, params.gamma) *
         (params.gamma * (1.0 - g) * ce + g);
}

double sce_loss(const Prediction& pred, Label label, const SceParams& params) {
  // RCE = -[p log p* + (1 - p) log(1 - p*)] collapses to -clamp * g for binary p*.
  const double g = std::abs(pred.p - as_real(label));
  const double rce = -params.log_zero_clamp * g;
  return params.alpha_sce * ce_loss(pred, label) + params.beta_sce * rce;
}

double sce_grad_logit(const Prediction& pred, Label label, const SceParams& params) {
  const double dg = label_sign(label) * pred.p * (1.0 - pred.p);
  return params.alpha_sce * ce_grad_logit(pred, label) - params.beta_sce * params.log_zero_clamp * dg;
}

double smooth_l1(double pred_offset, double target_offset) {
  const double x = pred_offset - target_offset;
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

double smooth_l1_grad(double pred_offset, double target_offset) {
  const double x = pred_offset - target_offset;
  if (std::abs(x) < 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

}  // namespace dghm
