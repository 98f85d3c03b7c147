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

#pragma once

#include <cstdint>

namespace dghm {

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before any log.
inline constexpr double kProbEpsilon = 1e-12;

enum class Label : std::uint8_t { Negative = 0, Positive = 1 };

inline constexpr double as_real(Label l) { return l == Label::Positive ? 1.0 : 0.0; }
inline constexpr Label label_from_bit(int bit) { return bit != 0 ? Label::Positive : Label::Negative; }

/// Classification output for one anchor. `p` is always sigmoid(logit) clamped
/// away from 0 and 1.
struct Prediction {
  double logit = 0.0;
  double p = 0.5;

  static Prediction from_logit(double logit);
  /// Inverse path, used where a probability is the natural input (tests, curves).
  static Prediction from_probability(double p);
};

double sigmoid(double logit);
double clamp_probability(double p);

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct SceParams {
  double alpha_sce = 0.01;
  double beta_sce = 1.0;
  /// Stand-in for log(0) in the reverse term.
  double log_zero_clamp = -4.0;
};

// Per-example losses. All are nonnegative; gradients are d(loss)/d(logit).

double ce_loss(const Prediction& pred, Label label);
/// |p - p*|, the magnitude of the CE gradient with respect to the logit.
double gradient_norm(const Prediction& pred, Label label);
double ce_grad_logit(const Prediction& pred, Label label);

/// alpha_t * g^gamma * CE, with alpha_t = alpha for positives and 1 - alpha
/// for negatives.
double focal_loss(const Prediction& pred, Label label, const FocalParams& params);
double focal_grad_logit(const Prediction& pred, Label label, const FocalParams& params);

/// alpha_sce * CE + beta_sce * RCE where the reverse term swaps the roles of
/// p and p* and uses `log_zero_clamp` for log(0).
double sce_loss(const Prediction& pred, Label label, const SceParams& params);
double sce_grad_logit(const Prediction& pred, Label label, const SceParams& params);

/// Huber-style loss with the transition fixed at |x| = 1.
double smooth_l1(double pred_offset, double target_offset);
double smooth_l1_grad(double pred_offset, double target_offset);

}  // namespace dghm
