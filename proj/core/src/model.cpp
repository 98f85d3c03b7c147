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

#include "dghm/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dghm/text.hpp"

namespace dghm {

Predictor::Predictor(std::size_t input_dim, std::span<const std::size_t> hidden) : input_dim_(input_dim) {
  build_layout(hidden);
}

Predictor::Predictor(std::size_t input_dim, std::span<const std::size_t> hidden, Rng& rng, double init_scale)
    : Predictor(input_dim, hidden) {
  for (std::size_t l = 0; l < hidden_layer_count(); ++l) {
    const LayerShape& s = layers_[l];
    const double bound = init_scale / std::sqrt(static_cast<double>(s.in));
    for (std::size_t k = 0; k < s.weight_count(); ++k) params_[s.offset + k] = rng.uniform(-bound, bound);
  }
}

void Predictor::build_layout(std::span<const std::size_t> hidden) {
  if (input_dim_ == 0) throw std::invalid_argument("Predictor: input dimension must be positive");
  if (hidden.empty() || hidden.size() > 2) throw std::invalid_argument("Predictor: expects one or two hidden layers");
  std::size_t in = input_dim_;
  std::size_t offset = 0;
  auto push = [&](std::size_t out) {
    if (out == 0) throw std::invalid_argument("Predictor: empty layer");
    layers_.push_back({in, out, offset});
    offset += in * out + out;
  };
  for (std::size_t h : hidden) {
    push(h);
    in = h;
  }
  push(1);
  layers_.back().in = in;
  push(4);
  params_.assign(offset, 0.0);
}

namespace {

// Activations of every hidden layer for one example.
struct Trace {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l+1] = output of hidden layer l
  PredictorOutput out;
};

void dense(const LayerShape& s, std::span<const double> params, std::span<const double> in, std::span<double> out) {
  const double* w = params.data() + s.offset;
  const double* b = w + s.weight_count();
  for (std::size_t o = 0; o < s.out; ++o) {
    double acc = b[o];
    const double* row = w + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

Trace trace_forward(const Predictor& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("Predictor: expected " + std::to_string(model.input_dim()) + " features, got " +
                                std::to_string(x.size()));
  }
  const auto& layers = model.layers();
  const auto params = model.params();
  Trace t;
  t.acts.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < model.hidden_layer_count(); ++l) {
    std::vector<double> a(layers[l].out);
    dense(layers[l], params, t.acts.back(), a);
    for (double& v : a) v = std::tanh(v);
    t.acts.push_back(std::move(a));
  }
  const std::size_t head = model.hidden_layer_count();
  dense(layers[head], params, t.acts.back(), std::span(&t.out.logit, 1));
  dense(layers[head + 1], params, t.acts.back(), t.out.offsets);
  return t;
}

// Accumulates d(loss)/d(params) for one example given output gradients.
void backprop(const Predictor& model, const Trace& t, double d_logit, const std::array<double, 4>& d_offsets,
              std::span<double> grad) {
  const auto& layers = model.layers();
  const auto params = model.params();
  const std::size_t head = model.hidden_layer_count();
  const std::vector<double>& top = t.acts.back();
  std::vector<double> da(top.size(), 0.0);

  auto head_grad = [&](const LayerShape& s, std::span<const double> d_out) {
    const double* w = params.data() + s.offset;
    double* gw = grad.data() + s.offset;
    double* gb = gw + s.weight_count();
    for (std::size_t o = 0; o < s.out; ++o) {
      if (d_out[o] == 0.0) continue;
      for (std::size_t i = 0; i < s.in; ++i) {
        gw[o * s.in + i] += d_out[o] * top[i];
        da[i] += w[o * s.in + i] * d_out[o];
      }
      gb[o] += d_out[o];
    }
  };
  head_grad(layers[head], std::span(&d_logit, 1));
  head_grad(layers[head + 1], d_offsets);

  for (std::size_t l = head; l-- > 0;) {
    const LayerShape& s = layers[l];
    const std::vector<double>& out = t.acts[l + 1];
    const std::vector<double>& in = t.acts[l];
    const double* w = params.data() + s.offset;
    double* gw = grad.data() + s.offset;
    double* gb = gw + s.weight_count();
    std::vector<double> da_prev(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double dz = da[o] * (1.0 - out[o] * out[o]);
      if (dz == 0.0) continue;
      for (std::size_t i = 0; i < s.in; ++i) {
        gw[o * s.in + i] += dz * in[i];
        da_prev[i] += w[o * s.in + i] * dz;
      }
      gb[o] += dz;
    }
    da = std::move(da_prev);
  }
}

}  // namespace

PredictorOutput Predictor::forward(std::span<const double> features) const {
  return trace_forward(*this, features).out;
}

std::vector<PredictorOutput> Predictor::forward_batch(std::span<const double> rows) const {
  if (rows.size() % input_dim_ != 0) throw std::invalid_argument("Predictor: batch is not a whole number of rows");
  std::vector<PredictorOutput> out;
  out.reserve(rows.size() / input_dim_);
  for (std::size_t r = 0; r < rows.size(); r += input_dim_) out.push_back(forward(rows.subspan(r, input_dim_)));
  return out;
}

namespace {

struct Evaluation {
  double classification = 0.0;
  double regression = 0.0;
  std::vector<Trace> traces;
  ClassificationResult cls;
  std::vector<std::array<double, 4>> d_offsets;
};

Evaluation evaluate(const Predictor& model, std::span<const TrainingExample> batch, const LossSpec& spec,
                    double regression_weight, DensityEma* ema, const HarmonizedBatch* frozen) {
  Evaluation ev;
  ev.traces.reserve(batch.size());
  std::vector<ClassificationExample> cls(batch.size());
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ev.traces.push_back(trace_forward(model, batch[i].features));
    cls[i] = {Prediction::from_logit(ev.traces.back().out.logit), batch[i].label, batch[i].ap_image};
    if (batch[i].label == Label::Positive) ++n_pos;
  }
  ev.cls = classification_loss(cls, spec, ema, frozen);
  ev.classification = ev.cls.loss;

  // Regression is only defined on positives.
  ev.d_offsets.assign(batch.size(), {});
  const double reg_scale = regression_weight / static_cast<double>(std::max<std::size_t>(1, n_pos));
  double reg = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].label != Label::Positive) continue;
    for (std::size_t k = 0; k < 4; ++k) {
      const double o = ev.traces[i].out.offsets[k];
      reg += smooth_l1(o, batch[i].targets[k]);
      ev.d_offsets[i][k] = reg_scale * smooth_l1_grad(o, batch[i].targets[k]);
    }
  }
  ev.regression = reg_scale * reg;
  return ev;
}

}  // namespace

BatchGradient backward(const Predictor& model, std::span<const TrainingExample> batch, const LossSpec& spec,
                       double regression_weight, DensityEma* ema, const HarmonizedBatch* frozen) {
  Evaluation ev = evaluate(model, batch, spec, regression_weight, ema, frozen);
  BatchGradient out;
  out.classification_loss = ev.classification;
  out.regression_loss = ev.regression;
  out.loss = ev.classification + ev.regression;
  out.grad.assign(model.params().size(), 0.0);
  out.gradient_norms.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.gradient_norms[i] = gradient_norm(Prediction::from_logit(ev.traces[i].out.logit), batch[i].label);
    backprop(model, ev.traces[i], ev.cls.grad_logit[i], ev.d_offsets[i], out.grad);
  }
  out.weights = std::move(ev.cls.weights);
  return out;
}

namespace {

// Sign of (|x| - 1) for every positive regression residual; a perturbation
// that flips any of them straddles the smooth-L1 kink.
std::vector<int> kink_sides(const Predictor& model, std::span<const TrainingExample> batch) {
  std::vector<int> sides;
  for (const auto& ex : batch) {
    if (ex.label != Label::Positive) continue;
    const PredictorOutput o = model.forward(ex.features);
    for (std::size_t k = 0; k < 4; ++k) sides.push_back(std::abs(o.offsets[k] - ex.targets[k]) < 1.0 ? 0 : 1);
  }
  return sides;
}

double total_loss(const Predictor& model, std::span<const TrainingExample> batch, const LossSpec& spec,
                  double regression_weight, const HarmonizedBatch* frozen) {
  const Evaluation ev = evaluate(model, batch, spec, regression_weight, nullptr, frozen);
  return ev.classification + ev.regression;
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const Predictor& model, std::span<const TrainingExample> batch,
                                               const LossSpec& spec, double regression_weight,
                                               const FiniteDifferenceOptions& options) {
  const BatchGradient analytic = backward(model, batch, spec, regression_weight);
  const HarmonizedBatch* frozen = analytic.weights ? &*analytic.weights : nullptr;

  std::vector<std::size_t> indices(model.params().size());
  std::iota(indices.begin(), indices.end(), 0);
  if (indices.size() > options.max_params) {
    Rng rng(options.seed);
    rng.shuffle(std::span(indices));
    indices.resize(options.max_params);
    std::sort(indices.begin(), indices.end());
  }

  const std::vector<int> base_sides = kink_sides(model, batch);
  FiniteDifferenceReport report;
  Predictor probe = model;
  for (std::size_t k : indices) {
    const double original = probe.params()[k];
    probe.params()[k] = original + options.step;
    const double plus = total_loss(probe, batch, spec, regression_weight, frozen);
    const bool crosses_plus = kink_sides(probe, batch) != base_sides;
    probe.params()[k] = original - options.step;
    const double minus = total_loss(probe, batch, spec, regression_weight, frozen);
    const bool crosses_minus = kink_sides(probe, batch) != base_sides;
    probe.params()[k] = original;
    if (crosses_plus || crosses_minus) {
      ++report.excluded;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic.grad[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
    ++report.checked;
  }
  return report;
}

AdamState::AdamState(std::size_t param_count, AdamConfig cfg)
    : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("AdamState: parameter / gradient shape mismatch");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * grads[k];
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * grads[k] * grads[k];
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void write_checkpoint(std::ostream& out, const Predictor& model) {
  out << "dghm-checkpoint v1 input_dim " << model.input_dim() << " layers " << model.layers().size() << '\n';
  for (const auto& s : model.layers()) out << "layer " << s.in << ' ' << s.out << '\n';
  for (double p : model.params()) out << fmt_double(p) << '\n';
}

Predictor read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: empty file");
  const auto head = split_whitespace(line);
  if (head.size() != 6 || head[0] != "dghm-checkpoint" || head[1] != "v1") {
    throw std::runtime_error("checkpoint: bad header");
  }
  const auto input_dim = static_cast<std::size_t>(parse_int(head[3]));
  const auto n_layers = static_cast<std::size_t>(parse_int(head[5]));
  if (n_layers < 3) throw std::runtime_error("checkpoint: too few layers");
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated layer table");
    const auto f = split_whitespace(line);
    if (f.size() != 3 || f[0] != "layer") throw std::runtime_error("checkpoint: bad layer line");
    if (l + 2 < n_layers) hidden.push_back(static_cast<std::size_t>(parse_int(f[2])));
  }
  Predictor model(input_dim, hidden);
  for (double& p : model.params()) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated parameters");
    p = parse_double(line);
  }
  return model;
}

}  // namespace dghm
