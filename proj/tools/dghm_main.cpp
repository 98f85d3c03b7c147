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

// dghm: corpus generation, training runs, experiment grids and figure data.
//
// Exit codes: 0 success, 1 configuration / usage / IO error, 2 divergence.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dghm/corpus_io.hpp"
#include "dghm/experiment.hpp"
#include "dghm/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "dghm_out";
  int jobs = 1;
  bool force = false;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw dghm::ConfigError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

dghm::ExperimentConfig load_config(const GlobalOptions& g) {
  dghm::ExperimentConfig cfg = g.config_path.empty() ? dghm::parse_config("{}") : dghm::parse_config(read_file(g.config_path));
  if (g.seed) cfg.seeds = {*g.seed};
  return cfg;
}

fs::path prepare_out(const GlobalOptions& g) {
  const fs::path out(g.out);
  if (fs::exists(out) && !fs::is_empty(out) && !g.force) {
    throw IoError("output directory '" + out.string() + "' is not empty; pass --force to overwrite");
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
  return out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  return f;
}

void write_manifest(const fs::path& dir, json manifest) {
  auto f = open_out(dir / "manifest.json");
  f << manifest.dump(2) << '\n';
}

json manifest_for(std::string_view command, const dghm::ExperimentContext& ctx, const std::vector<std::string>& files) {
  return {{"command", std::string(command)},
          {"config_hash", ctx.hash()},
          {"config", json::parse(dghm::canonical_config(ctx.config()))},
          {"artifacts", files}};
}

dghm::ExperimentContext make_context(dghm::ExperimentConfig cfg) {
  auto corpus = dghm::load_corpus(cfg.corpus);
  return dghm::ExperimentContext(std::move(cfg), std::move(corpus));
}

int cmd_gen(const GlobalOptions& g) {
  dghm::ExperimentConfig cfg = g.config_path.empty() ? dghm::parse_config("{}") : dghm::parse_config(read_file(g.config_path));
  if (g.seed) cfg.corpus.seed = *g.seed;
  cfg.corpus.path.clear();
  const auto scenes = dghm::load_corpus(cfg.corpus);
  const fs::path out = prepare_out(g);
  {
    auto f = open_out(out / "corpus.txt");
    dghm::write_corpus(f, scenes);
  }
  write_manifest(out, {{"command", "gen"},
                       {"artifacts", {"corpus.txt"}},
                       {"corpus",
                        {{"n_ap", cfg.corpus.n_ap},
                         {"n_np", cfg.corpus.n_np},
                         {"scene", json::parse(dghm::scene_spec_json(cfg.corpus.scene))}}},
                       {"seed", cfg.corpus.seed}});
  std::cout << "wrote " << scenes.size() << " scenes to " << (out / "corpus.txt").string() << '\n';
  return 0;
}

int cmd_train(const GlobalOptions& g) {
  const auto ctx = make_context(load_config(g));
  const auto& cfg = ctx.config();
  dghm::RunKey key{cfg.train.loss, cfg.eta, 0, cfg.seeds.front()};
  const dghm::RunArtifacts run = ctx.run(key);
  const fs::path out = prepare_out(g);
  {
    auto f = open_out(out / "model.ckpt");
    dghm::write_checkpoint(f, run.trained.model);
  }
  {
    auto f = open_out(out / "training_log.csv");
    dghm::write_training_log_csv(f, run.trained.log, "epoch_histograms.csv");
  }
  {
    auto f = open_out(out / "epoch_histograms.csv");
    bool header = true;
    for (const auto& e : run.trained.log) {
      dghm::write_histogram_csv(f, std::to_string(e.epoch), e.histograms, header, "epoch");
      header = false;
    }
    if (header) f << "epoch,partition,bin_index,bin_low,bin_high,count\n";
  }
  {
    const auto three = dghm::gradient_histograms(run.trained.model, run.pool, cfg.train.loss.harmonizer.bin_count);
    auto f = open_out(out / "histograms.csv");
    bool header = true;
    for (auto mode : {dghm::HarmonizerMode::Ghm, dghm::HarmonizerMode::Dghm, dghm::HarmonizerMode::DghmStar}) {
      dghm::write_histogram_csv(f, dghm::to_string(mode), dghm::regroup(three, mode), header);
      header = false;
    }
  }
  {
    auto f = open_out(out / "metrics.txt");
    dghm::write_metrics_report(f, run.report);
  }
  json manifest = manifest_for("train", ctx,
                               {"model.ckpt", "training_log.csv", "epoch_histograms.csv", "histograms.csv",
                                "metrics.txt"});
  // eta drops annotations; what the loss sees is the anchor-level flip rate.
  std::size_t ideal_pos = 0;
  std::size_t flipped = 0;
  std::size_t noisy = 0;
  for (const auto& a : run.pool) {
    ideal_pos += a.ideal_p_star == dghm::Label::Positive;
    flipped += a.p_star != a.ideal_p_star;
    noisy += a.ap_image && a.p_star == dghm::Label::Negative;
  }
  auto rate = [](std::size_t n, std::size_t d) { return d == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(d); };
  manifest["corruption"] = {{"eta", key.eta},
                            {"ideal_positive_anchors", ideal_pos},
                            {"flipped_anchors", flipped},
                            {"noisy_partition_anchors", noisy},
                            {"positive_flip_rate", rate(flipped, ideal_pos)},
                            {"noisy_partition_corruption_rate", rate(flipped, noisy)}};
  write_manifest(out, manifest);
  std::cout << "loss=" << key.loss.name() << " eta=" << dghm::fmt_double(key.eta) << " froc="
            << dghm::fmt_double(run.report.froc) << " recall=" << dghm::fmt_double(run.report.recall) << '\n';
  return 0;
}

int run_grid(const GlobalOptions& g, dghm::ExperimentConfig cfg, std::string_view command,
             const std::vector<std::pair<std::string, std::vector<dghm::RunKey> (*)(const dghm::ExperimentContext&)>>&
                 tables) {
  const auto ctx = make_context(std::move(cfg));
  std::vector<std::pair<std::string, std::vector<dghm::RunRecord>>> results;
  std::vector<dghm::RunRecord> all;
  for (const auto& [file, make_keys] : tables) {
    const auto keys = make_keys(ctx);
    std::clog << command << ": " << keys.size() << " runs for " << file << '\n';
    auto records = ctx.run_all(keys, g.jobs);
    all.insert(all.end(), records.begin(), records.end());
    results.emplace_back(file, std::move(records));
  }
  const fs::path out = prepare_out(g);
  std::vector<std::string> files;
  for (const auto& [file, records] : results) {
    auto f = open_out(out / file);
    dghm::write_results_csv(f, records);
    files.push_back(file);
  }
  {
    auto f = open_out(out / "timing.csv");
    dghm::write_timing_csv(f, all);
  }
  files.emplace_back("timing.csv");
  write_manifest(out, manifest_for(command, ctx, files));
  for (const auto& f : files) std::cout << (out / f).string() << '\n';
  return 0;
}

int cmd_export_figs(const GlobalOptions& g, const std::string& run_dir) {
  const fs::path dir(run_dir);
  const fs::path hist_path = dir / "histograms.csv";
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(hist_path) || !fs::exists(manifest_path)) {
    throw IoError("'" + run_dir + "' is not a completed training run (need histograms.csv and manifest.json)");
  }
  const json manifest = json::parse(read_file(manifest_path));
  const dghm::ExperimentConfig cfg = dghm::parse_config(manifest.at("config").dump());
  std::ifstream hin(hist_path);
  const dghm::HistogramSet three = dghm::read_histogram_csv(hin, dghm::to_string(dghm::HarmonizerMode::DghmStar));
  if (three.empty()) throw IoError("histograms.csv has no three-way rows");

  const fs::path out = prepare_out(g);
  {
    auto f = open_out(out / "fig3_histograms.csv");
    dghm::write_histogram_csv(f, "DGHM", dghm::regroup(three, dghm::HarmonizerMode::Dghm));
  }
  {
    auto f = open_out(out / "fig6_histograms.csv");
    dghm::write_histogram_csv(f, "DGHM_STAR", three);
  }
  {
    auto f = open_out(out / "fig4_curves.csv");
    bool header = true;
    auto emit = [&](dghm::LossKind kind, dghm::Partition branch, const std::string& name) {
      dghm::LossSpec spec = cfg.train.loss;
      spec.kind = kind;
      spec.harmonizer.mode = spec.effective_harmonizer().mode;
      const auto context = dghm::regroup(three, spec.harmonizer.mode);
      dghm::write_curve_csv(f, name, dghm::reformulated_gradient_curve(spec, context, branch), header);
      header = false;
    };
    using dghm::LossKind;
    using dghm::Partition;
    emit(LossKind::CE, Partition::Pooled, "CE");
    emit(LossKind::Focal, Partition::Pooled, "Focal");
    emit(LossKind::SCE, Partition::Pooled, "SCE");
    emit(LossKind::GhmC, Partition::Pooled, "GHM-C");
    emit(LossKind::DghmC, Partition::Clean, "DGHM-C/Clean");
    emit(LossKind::DghmC, Partition::Noisy, "DGHM-C/Noisy");
    emit(LossKind::DghmCStar, Partition::APp, "DGHM-C*/APp");
    emit(LossKind::DghmCStar, Partition::APn, "DGHM-C*/APn");
    emit(LossKind::DghmCStar, Partition::NPn, "DGHM-C*/NPn");
  }
  write_manifest(out, {{"command", "export-figs"},
                       {"source_run", run_dir},
                       {"config_hash", manifest.value("config_hash", "")},
                       {"artifacts", {"fig3_histograms.csv", "fig6_histograms.csv", "fig4_curves.csv"}}});
  std::cout << "figure data written to " << out.string() << '\n';
  return 0;
}

int cmd_split(const GlobalOptions& g) {
  const auto ctx = make_context(load_config(g));
  const fs::path out = prepare_out(g);
  {
    auto f = open_out(out / "folds.csv");
    f << "scene_id,image_class,fold\n";
    for (std::size_t i = 0; i < ctx.corpus().size(); ++i) {
      const auto& s = ctx.corpus()[i];
      f << s.id << ',' << (s.is_ap() ? "AP" : "NP") << ',' << ctx.folds()[i] << '\n';
    }
  }
  write_manifest(out, manifest_for("split", ctx, {"folds.csv"}));
  std::cout << ctx.config().folds << " folds written to " << (out / "folds.csv").string() << '\n';
  return 0;
}

int cmd_schema_check(const GlobalOptions& g) {
  const auto cfg = load_config(g);
  std::cout << json::parse(dghm::canonical_config(cfg)).dump(2) << '\n'
            << "config_hash=" << dghm::config_hash(cfg) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DGHM experiments on a synthetic partially annotated detection benchmark"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON experiment config (defaults when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "corpus seed for gen, single run seed otherwise");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "parallel runs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--force", g.force, "overwrite a non-empty output directory");

  auto* gen = app.add_subcommand("gen", "generate and serialize a corpus");
  auto* train = app.add_subcommand("train", "train one model; write checkpoint, logs and histograms");
  auto* compare = app.add_subcommand("compare", "loss comparison over folds and seeds");
  auto* dghm_star = compare->add_flag("--dghm-star", "also run the three-way DGHM-C*");
  auto* ablate = app.add_subcommand("ablate", "mu and lambda sensitivity grids");
  auto* sweep = app.add_subcommand("sweep-eta", "annotation missing-rate sweep");
  std::string run_dir;
  auto* figs = app.add_subcommand("export-figs", "figure CSVs from a training run");
  figs->add_option("--run", run_dir, "directory written by 'train'")->required();
  auto* split = app.add_subcommand("split", "write the fold assignment");
  auto* schema = app.add_subcommand("schema-check", "validate a config and print its resolved form");
  for (auto* sub : {gen, train, compare, ablate, sweep, figs, split, schema}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (gen->parsed()) return cmd_gen(g);
    if (train->parsed()) return cmd_train(g);
    if (compare->parsed()) {
      dghm::ExperimentConfig cfg = load_config(g);
      // Set in the config so the flag is part of the hash.
      if (dghm_star->count() > 0) cfg.include_dghm_star = true;
      return run_grid(g, std::move(cfg), "compare", {{"compare.csv", &dghm::compare_keys}});
    }
    if (ablate->parsed()) {
      return run_grid(g, load_config(g), "ablate",
                      {{"ablate_mu.csv", &dghm::ablate_mu_keys}, {"ablate_lambda.csv", &dghm::ablate_lambda_keys}});
    }
    if (sweep->parsed()) return run_grid(g, load_config(g), "sweep-eta", {{"sweep_eta.csv", &dghm::sweep_eta_keys}});
    if (figs->parsed()) return cmd_export_figs(g, run_dir);
    if (split->parsed()) return cmd_split(g);
    if (schema->parsed()) return cmd_schema_check(g);
  } catch (const dghm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
