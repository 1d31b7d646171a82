// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/baselines/dummy.hpp"
#include "cvrm/baselines/resnet.hpp"
#include "cvrm/baselines/svc.hpp"
#include "cvrm/baselines/tfidf.hpp"
#include "cvrm/data/synth.hpp"
#include "cvrm/eval/folds.hpp"
#include "cvrm/eval/metrics.hpp"
#include "cvrm/eval/trainer.hpp"
#include "cvrm/fusion/fusion.hpp"
#include "cvrm/hencoder/model.hpp"
#include "cvrm/nn/checkpoint.hpp"

namespace cvrm::eval {

enum class Family { dummy, svc, resnet, htrans, rule_oracle };
enum class Mode { text_only, fused };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::dummy: return "dummy";
    case Family::svc: return "svc";
    case Family::resnet: return "resnet";
    case Family::htrans: return "htrans";
    case Family::rule_oracle: return "rule_oracle";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  for (auto f : {Family::dummy, Family::svc, Family::resnet, Family::htrans, Family::rule_oracle})
    if (to_string(f) == s) return f;
  throw ConfigError("unknown model family '" + s + "' (expected dummy|svc|resnet|htrans|rule_oracle)");
}

inline std::string to_string(Mode m) { return m == Mode::text_only ? "text_only" : "fused"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "text_only" || s == "text") return Mode::text_only;
  if (s == "fused") return Mode::fused;
  throw ConfigError("unknown mode '" + s + "' (expected text_only|fused)");
}

struct FusionConfig {
  std::string embedder = "hashed";  // hashed | file
  std::string embedding_path;
  std::string atc_table;            // empty = bundled subset
  bool skip_unknown_codes = false;
};

struct ExperimentConfig {
  Family family = Family::htrans;
  Mode mode = Mode::text_only;
  TrainingConfig training;
  hencoder::EncoderConfig encoder;
  baselines::ResNetConfig resnet;
  baselines::SvcConfig svc;
  FusionConfig fusion;
  int vocab_size = 16384;
  std::string vocab_path;  // load instead of training when set
  std::filesystem::path checkpoint_dir;  // empty = keep in memory only
};

struct FoldResult {
  int fold = 0;
  ConfusionCounts test_counts;
  Metrics test;
  double val_f1 = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> log;
  std::string checkpoint;
  double seconds = 0.0;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<FoldResult> folds;
  FoldPlan plan;
  double seconds = 0.0;
};

inline nlohmann::ordered_json to_json(const FoldResult& f) {
  auto log = nlohmann::ordered_json::array();
  for (const auto& e : f.log) log.push_back(to_json(e));
  return {{"fold", f.fold},
          {"test", {{"tp", f.test_counts.tp}, {"fp", f.test_counts.fp}, {"fn", f.test_counts.fn},
                    {"tn", f.test_counts.tn}, {"precision", f.test.precision}, {"recall", f.test.recall},
                    {"f1", f.test.f1}, {"mcc", f.test.mcc}}},
          {"val_f1", f.val_f1},
          {"best_epoch", f.best_epoch},
          {"epochs", std::move(log)},
          {"checkpoint", f.checkpoint},
          {"seconds", f.seconds}};
}

namespace detail {

inline std::vector<std::string> record_texts(const std::vector<data::PatientRecord>& records,
                                             const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data::concatenated_text(records[i]));
  return out;
}

inline std::vector<std::string> consult_texts(const data::PatientRecord& r) {
  std::vector<std::string> out;
  for (const auto& c : r.consults) out.push_back(c.text);
  return out;
}

inline nn::Matrix<double> structured_matrix(const std::vector<data::PatientRecord>& records,
                                            const FusionConfig& cfg) {
  const auto atc = cfg.atc_table.empty() ? data::AtcTable::load_bundled()
                                         : data::AtcTable::load(cfg.atc_table);
  fusion::MedEmbedder embedder = fusion::MedEmbedder::hashed(atc);
  if (cfg.embedder == "file") {
    if (cfg.embedding_path.empty()) throw ConfigError("fusion.embedding_path is required for embedder=file");
    embedder = fusion::MedEmbedder::precomputed(
        std::make_shared<const fusion::EmbeddingMap>(fusion::load_embedding_file(cfg.embedding_path)), &atc);
  } else if (cfg.embedder != "hashed") {
    throw ConfigError("fusion.embedder must be 'hashed' or 'file'");
  }
  const auto policy = cfg.skip_unknown_codes ? fusion::UnknownCodePolicy::skip : fusion::UnknownCodePolicy::error;
  nn::Matrix<double> m(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(fusion::kStructuredDim));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto v = fusion::structured_features(records[i], embedder, policy);
    for (std::size_t c = 0; c < v.size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v[c];
  }
  return m;
}

inline baselines::SparseRows hstack(const baselines::SparseRows& a, const nn::Matrix<double>& dense) {
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index r = 0; r < a.outerSize(); ++r)
    for (baselines::SparseRows::InnerIterator it(a, r); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  for (Eigen::Index r = 0; r < dense.rows(); ++r)
    for (Eigen::Index c = 0; c < dense.cols(); ++c)
      if (dense(r, c) != 0.0) trips.emplace_back(static_cast<int>(r), static_cast<int>(a.cols() + c), dense(r, c));
  baselines::SparseRows out(a.rows(), a.cols() + dense.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline nn::Matrix<double> rows_of(const nn::Matrix<double>& m, const std::vector<std::size_t>& idx) {
  nn::Matrix<double> out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

}  // namespace detail

/// Trains the BPE vocabulary on the non-test records, or loads it.
inline tok::Vocab prepare_vocab(const std::vector<data::PatientRecord>& records, const FoldPlan& plan,
                                const ExperimentConfig& cfg) {
  if (!cfg.vocab_path.empty()) return tok::Vocab::load(cfg.vocab_path);
  std::vector<std::size_t> pool;
  for (const auto& f : plan.folds.front().train) pool.push_back(f);
  pool.insert(pool.end(), plan.folds.front().val.begin(), plan.folds.front().val.end());
  std::sort(pool.begin(), pool.end());
  return tok::Vocab::train(detail::record_texts(records, pool), static_cast<std::size_t>(cfg.vocab_size));
}

/// Held-out test split, stratified k-fold on the rest, one model per fold
/// (selected on its validation split) scored on the common test set.
inline ExperimentResult run_experiment(const std::vector<data::PatientRecord>& records,
                                       const ExperimentConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.training.validate();
  ExperimentResult res;
  const auto labels = data::labels_of(records);
  res.plan = make_fold_plan(labels, cfg.training.test_size, cfg.training.k_folds, cfg.training.seed);
  const auto& plan = res.plan;
  const int n_folds = cfg.training.max_folds > 0 ? cfg.training.max_folds : cfg.training.k_folds;
  const std::vector<int> test_labels = data::take(labels, plan.test);
  const bool fused = cfg.mode == Mode::fused;
  const bool neural = cfg.family == Family::htrans || cfg.family == Family::resnet;

  nn::Matrix<double> structured;
  if (fused && (neural || cfg.family == Family::svc)) structured = detail::structured_matrix(records, cfg.fusion);

  std::optional<tok::Vocab> vocab;
  std::vector<tok::TokenSequence> seqs;
  if (neural) {
    vocab = prepare_vocab(records, plan, cfg);
    const bool cls = cfg.family == Family::htrans && cfg.encoder.reserve_cls();
    seqs.reserve(records.size());
    for (const auto& r : records)
      seqs.push_back(tok::encode(*vocab, detail::consult_texts(r), static_cast<std::size_t>(cfg.encoder.budget), cls));
    spdlog::info("tokenizer: {} tokens, budget {}", vocab->size(), cfg.encoder.budget);
  }
  Batch<float> all;
  if (neural) {
    for (const auto& s : seqs) all.seqs.push_back(&s);
    all.labels = labels;
    if (fused) all.extra = structured.cast<float>();
  }

  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  for (int f = 0; f < n_folds; ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& fold = plan.folds[static_cast<std::size_t>(f)];
    const std::uint64_t fold_seed = derive_seed(cfg.training.seed, "fold", static_cast<std::uint64_t>(f));
    FoldResult fr;
    fr.fold = f;
    std::vector<int> pred;
    const std::string ckpt_base =
        cfg.checkpoint_dir.empty() ? std::string() : (cfg.checkpoint_dir / ("fold" + std::to_string(f))).string();

    switch (cfg.family) {
      case Family::dummy:
        pred = baselines::dummy_predict(data::take(labels, fold.train), plan.test.size(), fold_seed);
        break;
      case Family::rule_oracle:
        for (auto i : plan.test) pred.push_back(data::planted_label(records[i]));
        break;
      case Family::svc: {
        auto [tfidf, x_train] = baselines::TfidfModel::fit_transform(detail::record_texts(records, fold.train));
        auto x_val = tfidf.transform(detail::record_texts(records, fold.val));
        auto x_test = tfidf.transform(detail::record_texts(records, plan.test));
        if (fused) {
          x_train = detail::hstack(x_train, detail::rows_of(structured, fold.train));
          x_val = detail::hstack(x_val, detail::rows_of(structured, fold.val));
          x_test = detail::hstack(x_test, detail::rows_of(structured, plan.test));
        }
        const auto y_train = data::take(labels, fold.train);
        const auto model = baselines::svc_train(x_train, y_train, cfg.svc);
        fr.val_f1 = compute_metrics(model.predict(x_val), data::take(labels, fold.val)).f1;
        pred = model.predict(x_test);
        if (!ckpt_base.empty()) {
          fr.checkpoint = ckpt_base + ".svc.json";
          std::ofstream out(fr.checkpoint);
          out << nlohmann::ordered_json{{"tfidf", tfidf.to_json()}, {"svc", model.to_json()}}.dump() << '\n';
        }
        break;
      }
      case Family::htrans:
      case Family::resnet: {
        const Batch<float> train = all.slice(fold.train), val = all.slice(fold.val), test = all.slice(plan.test);
        const auto extra_dim = fused ? static_cast<Eigen::Index>(fusion::kStructuredDim) : 0;
        auto on_epoch = [&](const EpochLog& e) {
          spdlog::info("{} fold {} epoch {}: loss {:.5f} val F1 {:.4f} ({:.1f}s)", to_string(cfg.family), f,
                       e.epoch, e.train_loss, e.val_f1, e.seconds);
        };
        auto finish = [&](auto& model, const std::string& meta) {
          const auto tr = train_model(model, train, val, cfg.training, fold_seed, on_epoch);
          fr.log = tr.log;
          fr.best_epoch = tr.best_epoch;
          fr.val_f1 = tr.best_val_f1 < 0 ? 0.0 : tr.best_val_f1;
          pred = predict_all(model, test, static_cast<std::size_t>(cfg.training.eval_batch),
                             static_cast<std::size_t>(cfg.training.threads));
          if (!ckpt_base.empty()) {
            fr.checkpoint = ckpt_base + ".ckpt";
            nn::save_checkpoint(fr.checkpoint, model.params(), meta);
          }
        };
        if (cfg.family == Family::htrans) {
          hencoder::HTransModel<float> model(cfg.encoder, static_cast<Eigen::Index>(vocab->size()), extra_dim, fold_seed);
          finish(model, nlohmann::ordered_json{{"family", "htrans"}, {"encoder", hencoder::to_json(cfg.encoder)},
                                               {"vocab_size", vocab->size()}, {"extra_dim", extra_dim}}.dump());
        } else {
          baselines::ResNet1D<float> model(cfg.resnet, static_cast<Eigen::Index>(vocab->size()), extra_dim, fold_seed);
          finish(model, nlohmann::ordered_json{{"family", "resnet"}, {"resnet", baselines::to_json(cfg.resnet)},
                                               {"vocab_size", vocab->size()}, {"extra_dim", extra_dim}}.dump());
        }
        break;
      }
    }
    fr.test_counts = confusion(pred, test_labels);
    fr.test = compute_metrics(fr.test_counts);
    fr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::info("{} fold {}: test F1 {:.4f} MCC {:.4f}", to_string(cfg.family), f, fr.test.f1, fr.test.mcc);
    res.report.add_fold(fr.test_counts);
    res.folds.push_back(std::move(fr));
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace cvrm::eval
