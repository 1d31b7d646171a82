// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

// cvrm: corpus synthesis, tokenizer training, supervised experiments,
// zero-shot runs and report rendering.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/config/run_config.hpp"
#include "cvrm/data/corpus.hpp"
#include "cvrm/data/split.hpp"
#include "cvrm/data/synth.hpp"
#include "cvrm/eval/experiment.hpp"
#include "cvrm/eval/report.hpp"
#include "cvrm/tokenizer/bpe.hpp"
#include "cvrm/zeroshot/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cvrm;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string corpus;
  std::string out = "runs";
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("-c,--config", a.config_path, "Run config JSON");
  cmd->add_option("--set", a.overrides, "Override a config value, e.g. training.epochs=10")->take_all();
  cmd->add_option("--corpus", a.corpus, "Corpus JSONL (overrides data.corpus)");
  cmd->add_option("-o,--out", a.out, "Output directory")->capture_default_str();
}

struct LoadedConfig {
  config::RunConfig cfg;
  std::string snapshot;  // input bytes
  std::string effective;
};

LoadedConfig load_config(const ConfigArgs& a, std::vector<std::string> extra) {
  LoadedConfig lc;
  if (!a.config_path.empty()) {
    if (!fs::exists(a.config_path)) throw ConfigError("--config: file not found: " + a.config_path);
    lc.snapshot = eval::read_text(a.config_path);
  }
  std::vector<std::string> overrides = a.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (!a.corpus.empty()) overrides.push_back("data.corpus=\"" + a.corpus + "\"");
  lc.cfg = config::load_run_config(lc.snapshot, overrides);
  if (lc.snapshot.empty()) lc.snapshot = "{}\n";
  lc.effective = config::effective_config_text(lc.cfg);
  return lc;
}

std::vector<data::PatientRecord> load_records(const config::RunConfig& cfg) {
  if (cfg.data.corpus.empty()) throw ConfigError("--corpus is required (or set data.corpus in the config)");
  if (!fs::exists(cfg.data.corpus)) throw ConfigError("--corpus: file not found: " + cfg.data.corpus);
  auto records = data::load_corpus(cfg.data.corpus);
  spdlog::info("loaded {} records from {}", records.size(), cfg.data.corpus);
  return records;
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

int cmd_synth(std::size_t n, double ratio, std::uint64_t seed, const std::string& out) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("--ratio must be in (0, 1)");
  if (n < 2) throw ConfigError("--n must be >= 2");
  spdlog::info("root seed {}", seed);
  const auto res = data::synthesize_corpus(n, ratio, seed);
  const fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::save_corpus(path, res.records);
  const fs::path manifest = fs::path(out).replace_extension(".manifest.json");
  data::save_manifest(manifest, res.manifest);
  std::cout << "wrote " << res.records.size() << " records (" << res.manifest.positive_count << " positive) to "
            << out << "\n";
  return 0;
}

int cmd_tokenizer_train(const std::string& corpus, int vocab_size, const std::string& out) {
  if (corpus.empty()) throw ConfigError("--corpus is required");
  if (!fs::exists(corpus)) throw ConfigError("--corpus: file not found: " + corpus);
  const auto records = data::load_corpus(corpus);
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(data::concatenated_text(r));
  const auto vocab = tok::Vocab::train(texts, static_cast<std::size_t>(vocab_size));
  vocab.save(out);
  std::cout << "wrote vocabulary of " << vocab.size() << " tokens to " << out << "\n";
  return 0;
}

int cmd_experiment(const ConfigArgs& a, std::vector<std::string> extra, bool single_fold, bool dry_run) {
  const auto t0 = std::chrono::steady_clock::now();
  if (single_fold) extra.push_back("training.max_folds=1");
  auto lc = load_config(a, extra);
  const auto& ex = lc.cfg.experiment;
  const bool fused = ex.mode == eval::Mode::fused;
  spdlog::info("root seed {}", ex.training.seed);
  if (ex.family == eval::Family::htrans) {
    const auto head_in = ex.encoder.embed_dim + (fused ? static_cast<int>(fusion::kStructuredDim) : 0);
    std::cout << "head input dim: " << head_in << "\n";
  }
  if (dry_run) {
    std::cout << lc.effective;
    return 0;
  }
  auto records = load_records(lc.cfg);
  const std::string id = eval::run_id(lc.effective);
  const fs::path dir = fs::path(a.out) / id;
  fs::create_directories(dir);
  auto exp_cfg = ex;
  if (ex.family == eval::Family::htrans || ex.family == eval::Family::resnet || ex.family == eval::Family::svc)
    exp_cfg.checkpoint_dir = dir;
  const auto res = eval::run_experiment(records, exp_cfg);

  eval::RunArtifact art;
  art.id = id;
  art.label = eval::to_string(ex.family) + "/" + eval::to_string(ex.mode);
  art.config_snapshot = lc.snapshot;
  art.effective_config = lc.effective;
  art.report = res.report;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : res.folds) {
    folds.push_back(eval::to_json(f));
    if (!f.checkpoint.empty()) art.checkpoints.push_back(fs::path(f.checkpoint).filename().string());
  }
  art.details["folds"] = std::move(folds);
  art.details["test_size"] = res.plan.test.size();
  art.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  eval::save_artifact(dir, art);
  std::cout << eval::render_table({eval::make_row(art.id, art.label, art.report)});
  std::cout << "run artifact: " << dir.string() << "\n";
  return 0;
}

int cmd_zeroshot(const ConfigArgs& a, std::vector<std::string> extra) {
  const auto t0 = std::chrono::steady_clock::now();
  auto lc = load_config(a, extra);
  const auto& z = lc.cfg.zeroshot;
  std::unique_ptr<zeroshot::ChatClient> client;
  if (z.backend == "http")
    client = std::make_unique<zeroshot::HttpClient>(z.http);
  else
    client = std::make_unique<zeroshot::MockClient>(z.inverted);
  auto records = load_records(lc.cfg);
  spdlog::info("root seed {}", lc.cfg.experiment.training.seed);
  if (z.split == "test") {
    const auto split = data::split_train_test(data::labels_of(records), lc.cfg.experiment.training.test_size,
                                              lc.cfg.experiment.training.seed);
    records = data::take(records, split.test);
  }
  const std::string id = eval::run_id(lc.effective);
  const fs::path dir = fs::path(a.out) / id;
  fs::create_directories(dir);
  zeroshot::ResponseCache cache(z.cache.empty() ? dir / "responses.jsonl" : fs::path(z.cache));
  zeroshot::ZeroshotOptions opt;
  opt.concurrency = z.concurrency;
  opt.use_cache = z.use_cache;
  const auto res = zeroshot::run_zeroshot(records, *client, cache, opt);
  spdlog::info("zeroshot: {} records, {} calls, {} cache hits, {} parse errors", records.size(), res.calls,
               res.cache_hits, res.parse_errors);

  eval::RunArtifact art;
  art.id = id;
  art.label = "zeroshot/" + z.backend + (z.backend == "http" ? ":" + z.http.model : "");
  art.config_snapshot = lc.snapshot;
  art.effective_config = lc.effective;
  art.report = res.report;
  art.details = zeroshot::to_json(res);
  art.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  eval::save_artifact(dir, art);
  std::cout << eval::render_table({eval::make_row(art.id, art.label, art.report)});
  std::cout << "calls: " << res.calls << ", cache hits: " << res.cache_hits << ", parse errors: " << res.parse_errors
            << "\n";
  std::cout << "run artifact: " << dir.string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<eval::ReportRow> rows;
  for (const auto& r : runs) {
    if (!fs::exists(r)) throw ConfigError("run directory not found: " + r);
    rows.push_back(eval::load_row(r));
  }
  const std::string table = eval::render_table(rows);
  std::cout << table;
  if (!out.empty()) eval::write_text(out, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cvrm: long-document clinical classification toolkit"};
  app.require_subcommand(1);
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "More logging (repeatable)");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  std::size_t n = 3482;
  double ratio = 0.1939;
  std::uint64_t seed = 42;
  std::string synth_out = "corpus.jsonl";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic consult corpus");
  synth->add_option("-n,--n", n, "Number of records")->capture_default_str();
  synth->add_option("--ratio", ratio, "Fraction of positive records")->capture_default_str();
  synth->add_option("--seed", seed, "Generator seed")->capture_default_str();
  synth->add_option("-o,--out", synth_out, "Output JSONL")->capture_default_str();

  std::string tok_corpus, tok_out = "vocab.json";
  int vocab_size = 16384;
  auto* tokc = app.add_subcommand("tokenizer-train", "Train a BPE vocabulary on a corpus");
  tokc->add_option("--corpus", tok_corpus, "Corpus JSONL");
  tokc->add_option("--vocab-size", vocab_size, "Target vocabulary size")->capture_default_str();
  tokc->add_option("-o,--out", tok_out, "Output vocabulary JSON")->capture_default_str();

  ConfigArgs train_args, cv_args, zs_args;
  std::string model, mode, pooling, backend;
  bool dry_run = false, no_cache = false, inverted = false;
  auto* train = app.add_subcommand("train", "Train and evaluate one fold");
  auto* crossval = app.add_subcommand("crossval", "Run the full k-fold experiment");
  for (auto [cmd, args] : {std::pair{train, &train_args}, std::pair{crossval, &cv_args}}) {
    add_config_options(cmd, *args);
    cmd->add_option("--model", model, "dummy|svc|resnet|htrans|rule_oracle");
    cmd->add_option("--mode", mode, "text_only|fused");
    cmd->add_option("--pooling", pooling, "cls|average");
    cmd->add_flag("--dry-run", dry_run, "Print the effective config and exit");
  }
  auto* zs = app.add_subcommand("zeroshot", "Two-prompt zero-shot labelling");
  add_config_options(zs, zs_args);
  zs->add_option("--backend", backend, "mock|http");
  zs->add_flag("--no-cache", no_cache, "Ignore cached responses");
  zs->add_flag("--inverted", inverted, "Mock backend answers the opposite label");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Render a comparison table of run directories");
  report->add_option("runs", report_runs, "Run directories or report.json files");
  report->add_option("-o,--out", report_out, "Also write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : verbosity > 0 ? spdlog::level::debug : spdlog::level::info);

  auto model_overrides = [&] {
    std::vector<std::string> o;
    if (!model.empty()) o.push_back("model.family=" + json_string(model));
    if (!mode.empty()) o.push_back("model.mode=" + json_string(mode));
    if (!pooling.empty()) o.push_back("model.encoder.pooling=" + json_string(pooling));
    return o;
  };
  try {
    if (*synth) return cmd_synth(n, ratio, seed, synth_out);
    if (*tokc) return cmd_tokenizer_train(tok_corpus, vocab_size, tok_out);
    if (*train) return cmd_experiment(train_args, model_overrides(), true, dry_run);
    if (*crossval) return cmd_experiment(cv_args, model_overrides(), false, dry_run);
    if (*zs) {
      std::vector<std::string> o;
      if (!backend.empty()) o.push_back("zeroshot.backend=" + json_string(backend));
      if (no_cache) o.push_back("zeroshot.use_cache=false");
      if (inverted) o.push_back("zeroshot.inverted=true");
      return cmd_zeroshot(zs_args, o);
    }
    if (*report) return cmd_report(report_runs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
