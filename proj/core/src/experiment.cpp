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

#include "dghm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "dghm/corpus_io.hpp"
#include "dghm/text.hpp"

namespace dghm {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCorruptionStream = 21;

// ---- strict JSON reading --------------------------------------------------

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  const json* take(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.contains(it.key())) throw ConfigError("unknown config key '" + at(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  out = j.get<double>();
  if (!std::isfinite(out)) throw ConfigError(path + ": must be finite");
}

void read_value(const json& j, const std::string& path, int& out) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(path + ": integer out of range");
  }
  out = static_cast<int>(v);
}

void read_value(const json& j, const std::string& path, std::uint64_t& out) {
  if (j.is_number_unsigned()) {
    out = j.get<std::uint64_t>();
  } else if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    out = static_cast<std::uint64_t>(j.get<std::int64_t>());
  } else {
    throw ConfigError(path + ": expected a nonnegative integer");
  }
}

void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
  out = j.get<bool>();
}

void read_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  out = j.get<std::string>();
}

void read_value(const json& j, const std::string& path, LossKind& out) {
  std::string s;
  read_value(j, path, s);
  const auto k = loss_kind_from_string(s);
  if (!k) throw ConfigError(path + ": unknown loss '" + s + "'");
  out = *k;
}

void read_value(const json& j, const std::string& path, std::pair<double, double>& out) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path + ": expected a [a, b] pair");
  read_value(j[0], path + "[0]", out.first);
  read_value(j[1], path + "[1]", out.second);
}

template <class T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<T> v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) read_value(j[i], path + "[" + std::to_string(i) + "]", v[i]);
  out = std::move(v);
}

template <class T>
void field(ObjectReader& r, const std::string& key, T& out) {
  if (const json* j = r.take(key)) read_value(*j, r.at(key), out);
}

std::string_view froc_mode_name(FrocLevelMode m) {
  return m == FrocLevelMode::FalsePositivesPerImage ? "fp_per_image" : "nfps_score";
}

std::string_view n_convention_name(NConvention c) { return c == NConvention::TotalN ? "TotalN" : "PartitionN"; }

void read_scene(const json& j, const std::string& path, SceneSpec& s) {
  ObjectReader r(j, path);
  field(r, "width", s.width);
  field(r, "height", s.height);
  field(r, "objects_min", s.objects_min);
  field(r, "objects_max", s.objects_max);
  field(r, "object_size_min", s.object_size_min);
  field(r, "object_size_max", s.object_size_max);
  field(r, "max_object_iou", s.max_object_iou);
  field(r, "anchor_stride", s.anchor_stride);
  field(r, "anchor_sizes", s.anchor_sizes);
  field(r, "signal_strength", s.signal_strength);
  field(r, "noise_level", s.noise_level);
  field(r, "hard_fraction", s.hard_fraction);
  field(r, "hard_attenuation", s.hard_attenuation);
  field(r, "context_shift", s.context_shift);
  field(r, "offset_noise", s.offset_noise);
  field(r, "noise_dims", s.noise_dims);
  field(r, "nuisance_level", s.nuisance_level);
  r.finish();
}

json scene_json(const SceneSpec& s) {
  json sizes = json::array();
  for (const auto& [w, h] : s.anchor_sizes) sizes.push_back({w, h});
  return {{"width", s.width},
          {"height", s.height},
          {"objects_min", s.objects_min},
          {"objects_max", s.objects_max},
          {"object_size_min", s.object_size_min},
          {"object_size_max", s.object_size_max},
          {"max_object_iou", s.max_object_iou},
          {"anchor_stride", s.anchor_stride},
          {"anchor_sizes", sizes},
          {"signal_strength", s.signal_strength},
          {"noise_level", s.noise_level},
          {"hard_fraction", s.hard_fraction},
          {"hard_attenuation", s.hard_attenuation},
          {"context_shift", s.context_shift},
          {"offset_noise", s.offset_noise},
          {"noise_dims", s.noise_dims},
          {"nuisance_level", s.nuisance_level}};
}

void read_loss(const json& j, const std::string& path, LossSpec& loss) {
  ObjectReader r(j, path);
  field(r, "kind", loss.kind);
  if (const json* f = r.take("focal")) {
    ObjectReader fr(*f, r.at("focal"));
    field(fr, "alpha", loss.focal.alpha);
    field(fr, "gamma", loss.focal.gamma);
    fr.finish();
  }
  if (const json* s = r.take("sce")) {
    ObjectReader sr(*s, r.at("sce"));
    field(sr, "alpha", loss.sce.alpha_sce);
    field(sr, "beta", loss.sce.beta_sce);
    field(sr, "log_zero_clamp", loss.sce.log_zero_clamp);
    sr.finish();
  }
  if (const json* h = r.take("harmonizer")) {
    ObjectReader hr(*h, r.at("harmonizer"));
    auto& hc = loss.harmonizer;
    field(hr, "bin_count", hc.bin_count);
    field(hr, "mu_n", hc.mu_n);
    field(hr, "mu_c", hc.mu_c);
    field(hr, "lambda", hc.lambda);
    field(hr, "ema_momentum", hc.ema_momentum);
    std::string conv;
    field(hr, "n_convention", conv);
    if (conv == "TotalN") hc.n_convention = NConvention::TotalN;
    else if (conv == "PartitionN") hc.n_convention = NConvention::PartitionN;
    else if (!conv.empty()) throw ConfigError(hr.at("n_convention") + ": expected TotalN or PartitionN");
    hr.finish();
  }
  r.finish();
  loss.harmonizer.mode = loss.effective_harmonizer().mode;
}

json loss_json(const LossSpec& l) {
  const auto& h = l.harmonizer;
  return {{"kind", std::string(l.name())},
          {"focal", {{"alpha", l.focal.alpha}, {"gamma", l.focal.gamma}}},
          {"sce", {{"alpha", l.sce.alpha_sce}, {"beta", l.sce.beta_sce}, {"log_zero_clamp", l.sce.log_zero_clamp}}},
          {"harmonizer",
           {{"bin_count", h.bin_count},
            {"mu_n", h.mu_n},
            {"mu_c", h.mu_c},
            {"lambda", h.lambda},
            {"ema_momentum", h.ema_momentum},
            {"n_convention", std::string(n_convention_name(h.n_convention))}}}};
}

json to_json(const ExperimentConfig& c) {
  json losses = json::array();
  for (auto k : c.compare_losses) losses.push_back(std::string(to_string(k)));
  json sweep = json::array();
  for (auto k : c.sweep_losses) sweep.push_back(std::string(to_string(k)));
  json mu = json::array();
  for (const auto& [n, cc] : c.mu_grid) mu.push_back({n, cc});
  const auto& t = c.train;
  return {
      {"corpus",
       {{"path", c.corpus.path},
        {"n_ap", c.corpus.n_ap},
        {"n_np", c.corpus.n_np},
        {"seed", c.corpus.seed},
        {"scene", scene_json(c.corpus.scene)}}},
      {"loss", loss_json(t.loss)},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"decay_factor", t.decay_factor},
        {"decay_epochs", t.decay_epochs},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"batches_per_epoch", t.batches_per_epoch},
        {"regression_weight", t.regression_weight},
        {"hidden", t.hidden},
        {"init_scale", t.init_scale}}},
      {"eval",
       {{"score_floor", c.eval.score_floor},
        {"nms_iou", c.eval.nms_iou},
        {"min_precision", c.eval.min_precision},
        {"froc_levels", c.eval.froc_levels},
        {"froc_mode", std::string(froc_mode_name(c.eval.froc_mode))}}},
      {"eta", c.eta},
      {"eta_grid", c.eta_grid},
      {"compare_losses", losses},
      {"include_dghm_star", c.include_dghm_star},
      {"sweep_losses", sweep},
      {"mu_grid", mu},
      {"lambda_grid", c.lambda_grid},
      {"folds", c.folds},
      {"fold_limit", c.fold_limit},
      {"grid_fold_limit", c.grid_fold_limit},
      {"seeds", c.seeds},
  };
}

}  // namespace

TrainConfig ExperimentConfig::default_experiment_train() {
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.batch_size = 64;
  t.epochs = 15;
  t.decay_epochs = default_decay_epochs(t.epochs);
  t.hidden = {16};
  t.loss = LossSpec::of(LossKind::DghmC);
  return t;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  try {
    corpus.scene.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (corpus.path.empty() && (corpus.n_ap < 0 || corpus.n_np < 0 || corpus.n_ap + corpus.n_np == 0)) {
    fail("corpus: need at least one scene");
  }
  auto check_eta = [&](double e, const std::string& what) {
    if (!(e >= 0.0 && e <= 1.0)) fail(what + ": eta must lie in [0, 1]");
  };
  check_eta(eta, "eta");
  if (eta_grid.empty()) fail("eta_grid: must be nonempty");
  for (double e : eta_grid) check_eta(e, "eta_grid");
  if (compare_losses.empty()) fail("compare_losses: must be nonempty");
  if (sweep_losses.empty()) fail("sweep_losses: must be nonempty");
  if (mu_grid.empty()) fail("mu_grid: must be nonempty");
  for (const auto& [n, c] : mu_grid) {
    if (!(n > 0.0 && c > 0.0)) fail("mu_grid: exponents must be > 0");
  }
  if (lambda_grid.empty()) fail("lambda_grid: must be nonempty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0 && l <= 1.0)) fail("lambda_grid: lambda must lie in [0, 1]");
  }
  if (folds < 2) fail("folds: must be >= 2");
  if (fold_limit < 0 || fold_limit > folds) fail("fold_limit: must lie in [0, folds]");
  if (grid_fold_limit < 0 || grid_fold_limit > folds) fail("grid_fold_limit: must lie in [0, folds]");
  if (seeds.empty()) fail("seeds: must be nonempty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds: must be distinct");
  if (!(eval.score_floor >= 0.0 && eval.score_floor <= 1.0)) fail("eval.score_floor: must lie in [0, 1]");
  if (!(eval.nms_iou > 0.0 && eval.nms_iou <= 1.0)) fail("eval.nms_iou: must lie in (0, 1]");
  if (!(eval.min_precision >= 0.0 && eval.min_precision <= 1.0)) fail("eval.min_precision: must lie in [0, 1]");
  if (eval.froc_levels.empty()) fail("eval.froc_levels: must be nonempty");
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader r(j, "");
  if (const json* cj = r.take("corpus")) {
    ObjectReader cr(*cj, "corpus");
    field(cr, "path", c.corpus.path);
    field(cr, "n_ap", c.corpus.n_ap);
    field(cr, "n_np", c.corpus.n_np);
    field(cr, "seed", c.corpus.seed);
    if (const json* s = cr.take("scene")) read_scene(*s, "corpus.scene", c.corpus.scene);
    cr.finish();
  }
  if (const json* lj = r.take("loss")) read_loss(*lj, "loss", c.train.loss);
  if (const json* tj = r.take("train")) {
    ObjectReader tr(*tj, "train");
    auto& t = c.train;
    field(tr, "learning_rate", t.learning_rate);
    field(tr, "decay_factor", t.decay_factor);
    field(tr, "epochs", t.epochs);
    if (tr.take("epochs") != nullptr && !tj->contains("decay_epochs")) t.decay_epochs = default_decay_epochs(t.epochs);
    field(tr, "decay_epochs", t.decay_epochs);
    field(tr, "batch_size", t.batch_size);
    field(tr, "batches_per_epoch", t.batches_per_epoch);
    field(tr, "regression_weight", t.regression_weight);
    field(tr, "hidden", t.hidden);
    field(tr, "init_scale", t.init_scale);
    tr.finish();
  }
  if (const json* ej = r.take("eval")) {
    ObjectReader er(*ej, "eval");
    field(er, "score_floor", c.eval.score_floor);
    field(er, "nms_iou", c.eval.nms_iou);
    field(er, "min_precision", c.eval.min_precision);
    field(er, "froc_levels", c.eval.froc_levels);
    std::string mode;
    field(er, "froc_mode", mode);
    if (mode == "fp_per_image") c.eval.froc_mode = FrocLevelMode::FalsePositivesPerImage;
    else if (mode == "nfps_score") c.eval.froc_mode = FrocLevelMode::NfpsScore;
    else if (!mode.empty()) throw ConfigError("eval.froc_mode: expected fp_per_image or nfps_score");
    er.finish();
  }
  field(r, "eta", c.eta);
  field(r, "eta_grid", c.eta_grid);
  field(r, "compare_losses", c.compare_losses);
  field(r, "include_dghm_star", c.include_dghm_star);
  field(r, "sweep_losses", c.sweep_losses);
  field(r, "mu_grid", c.mu_grid);
  field(r, "lambda_grid", c.lambda_grid);
  field(r, "folds", c.folds);
  field(r, "fold_limit", c.fold_limit);
  field(r, "grid_fold_limit", c.grid_fold_limit);
  field(r, "seeds", c.seeds);
  r.finish();
  c.validate();
  return c;
}

std::string canonical_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(); }

std::string config_hash(const ExperimentConfig& cfg) { return hash_hex(fnv1a64(canonical_config(cfg))); }

std::string scene_spec_json(const SceneSpec& spec) { return scene_json(spec).dump(); }

std::vector<int> kfold_split(std::span<const Scene> scenes, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (static_cast<std::size_t>(k) > scenes.size()) throw std::invalid_argument("kfold_split: k exceeds scene count");
  std::vector<std::size_t> ap;
  std::vector<std::size_t> np;
  for (std::size_t i = 0; i < scenes.size(); ++i) (scenes[i].is_ap() ? ap : np).push_back(i);
  Rng rng(derive_seed(seed, 31));
  rng.shuffle(std::span<std::size_t>(ap));
  rng.shuffle(std::span<std::size_t>(np));
  std::vector<int> fold(scenes.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i : ap) fold[i] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
  for (std::size_t i : np) fold[i] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
  return fold;
}

std::vector<Scene> load_corpus(const CorpusConfig& cfg) {
  if (cfg.path.empty()) return generate_corpus(cfg.scene, cfg.n_ap, cfg.n_np, cfg.seed);
  std::ifstream in(cfg.path);
  if (!in) throw ConfigError("cannot open corpus file '" + cfg.path + "'");
  return read_corpus(in);
}

// ---- runs -----------------------------------------------------------------

ExperimentContext::ExperimentContext(ExperimentConfig cfg, std::vector<Scene> corpus)
    : cfg_(std::move(cfg)), hash_(config_hash(cfg_)), corpus_(std::move(corpus)) {
  if (static_cast<std::size_t>(cfg_.folds) > corpus_.size()) {
    throw ConfigError("folds: exceeds the corpus scene count");
  }
  folds_ = kfold_split(corpus_, cfg_.folds, cfg_.corpus.seed);
}

std::vector<int> ExperimentContext::evaluated_folds(int limit) const {
  const int n = limit == 0 ? cfg_.folds : limit;
  std::vector<int> out;
  for (int f = 0; f < n; ++f) out.push_back(f);
  return out;
}

std::vector<RawPrediction> predict(const Predictor& model, std::span<const LabeledAnchor> anchors) {
  std::vector<RawPrediction> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors) {
    const PredictorOutput o = model.forward(a.features);
    out.push_back({a.scene_id, a.anchor_box, sigmoid(o.logit), o.offsets});
  }
  return out;
}

MetricsReport evaluate(const Predictor& model, std::span<const Scene> test, std::span<const Scene> train,
                       const SceneSpec& spec, const EvalConfig& eval) {
  MetricsReport r;
  const auto test_anchors = label_scenes(test, spec);
  const auto dets = decode_and_suppress(predict(model, test_anchors), eval.score_floor, eval.nms_iou);
  std::vector<SceneTruth> truth;
  for (const auto& s : test) truth.push_back({s.id, s.is_ap(), s.is_ap() ? s.gt_boxes : std::vector<Box>{}});
  const ThresholdSweep sweep(dets, truth);
  if (sweep.gt_count() == 0) r.flags.emplace_back("recall_undefined");
  if (sweep.np_scene_count() == 0) r.flags.emplace_back("no_np_scenes");
  r.froc = froc(sweep, eval.froc_levels, eval.froc_mode);
  if (sweep.empty()) {
    r.flags.emplace_back("no_detections");
    r.threshold = 1.0;
  } else {
    const OperatingPoint op = operating_point(sweep, eval.min_precision);
    if (op.fallback) r.flags.emplace_back("precision_fallback");
    r.recall = op.recall;
    r.precision = op.precision;
    r.nfps = op.nfps;
    r.threshold = op.threshold;
  }

  const auto train_anchors = label_scenes(train, spec);
  const auto train_dets = decode_and_suppress(predict(model, train_anchors), eval.score_floor, eval.nms_iou);
  std::vector<TrainingScene> ts;
  for (const auto& s : train) {
    if (!s.is_ap()) continue;
    TrainingScene t{s.id, {}, {}};
    for (std::size_t i = 0; i < s.gt_boxes.size(); ++i) (s.annotated[i] ? t.kept : t.removed).push_back(s.gt_boxes[i]);
    ts.push_back(std::move(t));
  }
  const TrainingRecall tr = t_r_recall(sweep.empty() ? std::span<const DetectionResult>{} : train_dets, ts, r.threshold);
  r.t_recall = tr.t_recall;
  r.r_recall = tr.r_recall;
  if (tr.t_undefined) r.flags.emplace_back("t_recall_undefined");
  if (tr.r_undefined) r.flags.emplace_back("r_recall_undefined");
  return r;
}

RunArtifacts ExperimentContext::run(const RunKey& key) const {
  const CorruptionResult corrupted =
      corrupt_annotations(corpus_, {key.eta, derive_seed(key.seed, kCorruptionStream)});
  std::vector<Scene> train_scenes;
  std::vector<Scene> test_scenes;
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    if (folds_[i] == key.fold) test_scenes.push_back(corpus_[i]);
    else train_scenes.push_back(corrupted.scenes[i]);
  }
  TrainConfig tc = cfg_.train;
  tc.loss = key.loss;
  tc.loss.harmonizer.mode = tc.loss.effective_harmonizer().mode;
  tc.seed = key.seed;
  std::vector<LabeledAnchor> pool = label_scenes(train_scenes, cfg_.corpus.scene);
  TrainResult trained = train(pool, tc);
  MetricsReport report = evaluate(trained.model, test_scenes, train_scenes, cfg_.corpus.scene, cfg_.eval);
  return {std::move(trained), std::move(pool), std::move(report)};
}

RunRecord ExperimentContext::record(const RunKey& key) const {
  const auto t0 = std::chrono::steady_clock::now();
  RunArtifacts a = run(key);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  return {hash_, key, std::move(a.report), dt.count()};
}

std::vector<RunRecord> ExperimentContext::run_all(std::span<const RunKey> keys, int jobs) const {
  std::vector<RunRecord> out(keys.size());
  std::vector<std::exception_ptr> errors(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      try {
        out[i] = record(keys[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(keys.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

RunKey key_for(const LossSpec& base, LossKind kind, double eta, int fold, std::uint64_t seed) {
  LossSpec l = base;
  l.kind = kind;
  l.harmonizer.mode = l.effective_harmonizer().mode;
  return {l, eta, fold, seed};
}

}  // namespace

std::vector<RunKey> compare_keys(const ExperimentContext& ctx) {
  const auto& c = ctx.config();
  std::vector<LossKind> losses = c.compare_losses;
  if (c.include_dghm_star && std::find(losses.begin(), losses.end(), LossKind::DghmCStar) == losses.end()) {
    losses.push_back(LossKind::DghmCStar);
  }
  std::vector<RunKey> keys;
  for (LossKind k : losses) {
    for (int f : ctx.evaluated_folds(c.fold_limit)) {
      for (auto s : c.seeds) keys.push_back(key_for(c.train.loss, k, c.eta, f, s));
    }
  }
  return keys;
}

std::vector<RunKey> sweep_eta_keys(const ExperimentContext& ctx) {
  const auto& c = ctx.config();
  std::vector<RunKey> keys;
  for (LossKind k : c.sweep_losses) {
    for (double eta : c.eta_grid) {
      for (int f : ctx.evaluated_folds(c.grid_fold_limit)) {
        for (auto s : c.seeds) keys.push_back(key_for(c.train.loss, k, eta, f, s));
      }
    }
  }
  return keys;
}

std::vector<RunKey> ablate_mu_keys(const ExperimentContext& ctx) {
  const auto& c = ctx.config();
  std::vector<RunKey> keys;
  for (const auto& [mu_n, mu_c] : c.mu_grid) {
    LossSpec l = c.train.loss;
    l.harmonizer.mu_n = mu_n;
    l.harmonizer.mu_c = mu_c;
    for (int f : ctx.evaluated_folds(c.grid_fold_limit)) {
      for (auto s : c.seeds) keys.push_back(key_for(l, LossKind::DghmC, c.eta, f, s));
    }
  }
  return keys;
}

std::vector<RunKey> ablate_lambda_keys(const ExperimentContext& ctx) {
  const auto& c = ctx.config();
  std::vector<RunKey> keys;
  for (double lambda : c.lambda_grid) {
    LossSpec l = c.train.loss;
    l.harmonizer.lambda = lambda;
    for (int f : ctx.evaluated_folds(c.grid_fold_limit)) {
      for (auto s : c.seeds) keys.push_back(key_for(l, LossKind::DghmC, c.eta, f, s));
    }
  }
  return keys;
}

// ---- result tables ----------------------------------------------------------

namespace {

constexpr const char* kMetricNames[7] = {"recall", "precision", "nfps", "froc", "t_recall", "r_recall", "threshold"};

std::array<double, 7> metric_values(const MetricsReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {r.recall,
          r.precision,
          r.nfps,
          r.froc,
          r.has_flag("t_recall_undefined") ? nan : r.t_recall,
          r.has_flag("r_recall_undefined") ? nan : r.r_recall,
          r.threshold};
}

std::string cell(double v) { return std::isnan(v) ? std::string() : fmt_double(v); }

using GroupKey = std::tuple<std::string, double, double, double, double>;

GroupKey group_of(const RunKey& k) {
  const auto h = k.loss.effective_harmonizer();
  return {std::string(k.loss.name()), h.mu_n, h.mu_c, h.lambda, k.eta};
}

std::string join_flags(const std::vector<std::string>& flags) {
  std::string s;
  for (std::size_t i = 0; i < flags.size(); ++i) s += (i ? ";" : "") + flags[i];
  return s;
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const RunRecord> records) {
  for (const auto& r : records) {
    if (r.config_hash != records.front().config_hash) {
      throw std::invalid_argument("results: records from different configs cannot be aggregated");
    }
  }
  out << "row_type,config_hash,loss,mu_n,mu_c,lambda,eta,fold,seed,n_runs";
  for (const char* m : kMetricNames) out << ',' << m;
  for (const char* m : kMetricNames) out << ',' << m << "_std";
  out << ",flags\n";

  std::vector<GroupKey> order;
  std::map<GroupKey, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    const GroupKey g = group_of(r.key);
    auto [it, fresh] = groups.try_emplace(g);
    if (fresh) order.push_back(g);
    it->second.push_back(&r);

    const auto& [loss, mu_n, mu_c, lambda, eta] = g;
    out << "run," << r.config_hash << ',' << loss << ',' << fmt_double(mu_n) << ',' << fmt_double(mu_c) << ','
        << fmt_double(lambda) << ',' << fmt_double(eta) << ',' << r.key.fold << ',' << r.key.seed << ",1";
    for (double v : metric_values(r.report)) out << ',' << cell(v);
    for (std::size_t i = 0; i < 7; ++i) out << ',';
    out << ',' << join_flags(r.report.flags) << '\n';
  }

  for (const auto& g : order) {
    const auto& members = groups.at(g);
    std::array<double, 7> mean{};
    std::array<double, 7> std_dev{};
    std::set<std::string> flags;
    for (const auto* r : members) flags.insert(r->report.flags.begin(), r->report.flags.end());
    for (std::size_t m = 0; m < 7; ++m) {
      std::vector<double> xs;
      for (const auto* r : members) {
        const double v = metric_values(r->report)[m];
        if (!std::isnan(v)) xs.push_back(v);
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      if (xs.empty()) {
        mean[m] = std_dev[m] = nan;
        continue;
      }
      double sum = 0.0;
      for (double x : xs) sum += x;
      mean[m] = sum / static_cast<double>(xs.size());
      if (xs.size() < 2) {
        std_dev[m] = nan;
        continue;
      }
      double ss = 0.0;
      for (double x : xs) ss += (x - mean[m]) * (x - mean[m]);
      std_dev[m] = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    const auto& [loss, mu_n, mu_c, lambda, eta] = g;
    out << "mean," << members.front()->config_hash << ',' << loss << ',' << fmt_double(mu_n) << ','
        << fmt_double(mu_c) << ',' << fmt_double(lambda) << ',' << fmt_double(eta) << ",,," << members.size();
    for (double v : mean) out << ',' << cell(v);
    for (double v : std_dev) out << ',' << cell(v);
    out << ',' << join_flags({flags.begin(), flags.end()}) << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("row_type,", 0) != 0) throw std::runtime_error("results csv: bad header");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto num = [&](std::string_view s) { return s.empty() ? nan : parse_double(s); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 25) throw std::runtime_error("results csv: expected 25 columns: '" + line + "'");
    ResultRow r;
    r.row_type = f[0];
    r.config_hash = f[1];
    r.loss = f[2];
    r.mu_n = parse_double(f[3]);
    r.mu_c = parse_double(f[4]);
    r.lambda = parse_double(f[5]);
    r.eta = parse_double(f[6]);
    r.n_runs = static_cast<std::size_t>(parse_int(f[9]));
    for (std::size_t m = 0; m < 7; ++m) {
      r.values[m] = num(f[10 + m]);
      r.stds[m] = num(f[17 + m]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_timing_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << "loss,eta,fold,seed,wall_seconds\n";
  for (const auto& r : records) {
    out << r.key.loss.name() << ',' << fmt_double(r.key.eta) << ',' << r.key.fold << ',' << r.key.seed << ','
        << fmt_double(r.wall_seconds) << '\n';
  }
}

}  // namespace dghm
