// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/eval/experiment.hpp"
#include "cvrm/eval/report.hpp"
#include "cvrm/zeroshot/client.hpp"

namespace cvrm::config {

struct DataConfig {
  std::string corpus;
  std::size_t records = 3482;
  double positive_ratio = 0.1939;
  std::uint64_t seed = 42;
};

struct ZeroshotConfig {
  std::string backend = "mock";  // mock | http
  bool inverted = false;         // mock only
  zeroshot::HttpConfig http;
  int concurrency = 4;
  std::string cache;  // empty = <out>/responses.jsonl
  bool use_cache = true;
  std::string split = "test";  // test | all
};

/// The full run configuration: sections data, model, training, fusion and
/// zeroshot.
struct RunConfig {
  DataConfig data;
  eval::ExperimentConfig experiment;
  ZeroshotConfig zeroshot;
};

inline void validate(const RunConfig& c);

namespace detail {

using Json = nlohmann::json;
using Setter = std::function<void(const Json&)>;

/// Applies `setters` to the keys of `j`, rejecting unknown keys.
inline void read_section(const Json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, val] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
    try {
      it->second(val);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + section + "." + key + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  const auto& e = c.experiment;
  const auto& t = e.training;
  const auto& z = c.zeroshot;
  return {
      {"data", {{"corpus", c.data.corpus}, {"records", c.data.records}, {"positive_ratio", c.data.positive_ratio},
                {"seed", c.data.seed}}},
      {"model", {{"family", eval::to_string(e.family)},
                 {"mode", eval::to_string(e.mode)},
                 {"vocab_size", e.vocab_size},
                 {"vocab_path", e.vocab_path},
                 {"encoder", hencoder::to_json(e.encoder)},
                 {"resnet", baselines::to_json(e.resnet)},
                 {"svc", {{"C", e.svc.C}, {"tol", e.svc.tol}, {"max_iter", e.svc.max_iter}}}}},
      {"training", {{"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"lr", t.lr},
                    {"weight_decay", t.weight_decay},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"eps", t.eps},
                    {"class_weighting", t.class_weighting},
                    {"k_folds", t.k_folds},
                    {"test_size", t.test_size},
                    {"seed", t.seed},
                    {"threads", t.threads},
                    {"max_folds", t.max_folds},
                    {"eval_batch", t.eval_batch}}},
      {"fusion", {{"embedder", e.fusion.embedder},
                  {"embedding_path", e.fusion.embedding_path},
                  {"atc_table", e.fusion.atc_table},
                  {"skip_unknown_codes", e.fusion.skip_unknown_codes}}},
      {"zeroshot", {{"backend", z.backend},
                    {"inverted", z.inverted},
                    {"endpoint", z.http.endpoint},
                    {"model", z.http.model},
                    {"response_path", z.http.response_path},
                    {"api_key_env", z.http.api_key_env},
                    {"timeout_seconds", z.http.timeout_seconds},
                    {"max_attempts", z.http.max_attempts},
                    {"backoff_ms", z.http.backoff_ms},
                    {"concurrency", z.concurrency},
                    {"cache", z.cache},
                    {"use_cache", z.use_cache},
                    {"split", z.split}}},
  };
}

/// Reads a config document over the defaults. Unknown sections or keys are
/// configuration errors.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::set;
  RunConfig c;
  auto& e = c.experiment;
  auto& t = e.training;
  auto& z = c.zeroshot;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [section, val] : j.items()) {
    if (section == "data") {
      detail::read_section(val, section, {{"corpus", set(c.data.corpus)}, {"records", set(c.data.records)},
                                          {"positive_ratio", set(c.data.positive_ratio)}, {"seed", set(c.data.seed)}});
    } else if (section == "model") {
      detail::read_section(
          val, section,
          {{"family", [&](const auto& v) { e.family = eval::family_from_string(v.template get<std::string>()); }},
           {"mode", [&](const auto& v) { e.mode = eval::mode_from_string(v.template get<std::string>()); }},
           {"vocab_size", set(e.vocab_size)},
           {"vocab_path", set(e.vocab_path)},
           {"encoder", [&](const auto& v) { e.encoder = hencoder::encoder_config_from_json(v, e.encoder); }},
           {"resnet", [&](const auto& v) { e.resnet = baselines::resnet_config_from_json(v, e.resnet); }},
           {"svc", [&](const auto& v) {
              detail::read_section(v, "model.svc",
                                   {{"C", set(e.svc.C)}, {"tol", set(e.svc.tol)}, {"max_iter", set(e.svc.max_iter)}});
            }}});
    } else if (section == "training") {
      detail::read_section(val, section,
                           {{"epochs", set(t.epochs)},
                            {"batch_size", set(t.batch_size)},
                            {"lr", set(t.lr)},
                            {"weight_decay", set(t.weight_decay)},
                            {"beta1", set(t.beta1)},
                            {"beta2", set(t.beta2)},
                            {"eps", set(t.eps)},
                            {"class_weighting", set(t.class_weighting)},
                            {"k_folds", set(t.k_folds)},
                            {"test_size", set(t.test_size)},
                            {"seed", set(t.seed)},
                            {"threads", set(t.threads)},
                            {"max_folds", set(t.max_folds)},
                            {"eval_batch", set(t.eval_batch)}});
    } else if (section == "fusion") {
      detail::read_section(val, section,
                           {{"embedder", set(e.fusion.embedder)},
                            {"embedding_path", set(e.fusion.embedding_path)},
                            {"atc_table", set(e.fusion.atc_table)},
                            {"skip_unknown_codes", set(e.fusion.skip_unknown_codes)}});
    } else if (section == "zeroshot") {
      detail::read_section(val, section,
                           {{"backend", set(z.backend)},
                            {"inverted", set(z.inverted)},
                            {"endpoint", set(z.http.endpoint)},
                            {"model", set(z.http.model)},
                            {"response_path", set(z.http.response_path)},
                            {"api_key_env", set(z.http.api_key_env)},
                            {"timeout_seconds", set(z.http.timeout_seconds)},
                            {"max_attempts", set(z.http.max_attempts)},
                            {"backoff_ms", set(z.http.backoff_ms)},
                            {"concurrency", set(z.concurrency)},
                            {"cache", set(z.cache)},
                            {"use_cache", set(z.use_cache)},
                            {"split", set(z.split)}});
    } else {
      throw ConfigError("unknown config section '" + section + "'");
    }
  }
  validate(c);
  return c;
}

inline void validate(const RunConfig& c) {
  if (!(c.data.positive_ratio > 0.0 && c.data.positive_ratio < 1.0))
    throw ConfigError("data.positive_ratio must be in (0, 1)");
  if (c.data.records < 10) throw ConfigError("data.records must be >= 10");
  c.experiment.training.validate();
  c.experiment.encoder.validate();
  c.experiment.resnet.validate();
  if (c.experiment.vocab_size < 8) throw ConfigError("model.vocab_size is too small");
  if (c.zeroshot.backend != "mock" && c.zeroshot.backend != "http")
    throw ConfigError("zeroshot.backend must be 'mock' or 'http'");
  if (c.zeroshot.split != "test" && c.zeroshot.split != "all")
    throw ConfigError("zeroshot.split must be 'test' or 'all'");
  if (c.zeroshot.concurrency < 1) throw ConfigError("zeroshot.concurrency must be >= 1");
}

/// Sets `dotted.key=value` in a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override: " + assignment);
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

/// Parses `text` (empty = defaults), applies overrides in order, validates.
inline RunConfig load_run_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
  nlohmann::json doc = nlohmann::json::object();
  if (!text::trim(text).empty()) {
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

inline std::string effective_config_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace cvrm::config
