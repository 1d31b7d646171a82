// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/eval/metrics.hpp"
#include "cvrm/zeroshot/client.hpp"
#include "cvrm/zeroshot/deid.hpp"
#include "cvrm/zeroshot/prompts.hpp"

namespace cvrm::zeroshot {

/// "yes" -> 1, "no" -> 0 after trimming, lowercasing and dropping trailing
/// punctuation; anything else -> nullopt.
inline std::optional<int> parse_label(std::string_view response) {
  std::string s = text::to_lower(text::trim(response));
  while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) != 0 || text::is_space(s.back())))
    s.pop_back();
  if (s == "yes") return 1;
  if (s == "no") return 0;
  return std::nullopt;
}

/// Append-only JSONL store of responses keyed by (record id, prompt hash).
class ResponseCache {
 public:
  ResponseCache() = default;

  /// Loads existing entries; the file is created on first write.
  explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (text::trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[key(j.at("record_id").get<std::string>(), j.at("prompt_hash").get<std::string>())] =
            j.at("response").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        spdlog::warn("ignoring unreadable cache line {} in {}: {}", row, path_.string(), e.what());
      }
    }
  }

  std::optional<std::string> get(const std::string& record_id, const std::string& hash) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key(record_id, hash));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& record_id, const std::string& hash, const std::string& response) {
    std::lock_guard lock(mutex_);
    entries_[key(record_id, hash)] = response;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot write response cache: " + path_.string());
    out << nlohmann::ordered_json{{"record_id", record_id}, {"prompt_hash", hash}, {"response", response}}.dump()
        << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  static std::string key(const std::string& id, const std::string& hash) { return id + '\x1f' + hash; }

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

struct ZeroshotOptions {
  int concurrency = 4;
  bool use_cache = true;
  std::string summary = std::string(kGuidelineSummary);
};

struct RecordOutcome {
  std::string patient_id;
  int label = 0;
  std::optional<int> prediction;
  std::string response;
  std::size_t leaks = 0;
};

struct ZeroshotResult {
  eval::MetricsReport report;
  eval::ConfusionCounts counts;
  std::vector<RecordOutcome> records;
  std::size_t parse_errors = 0;
  std::size_t calls = 0;
  std::size_t cache_hits = 0;
};

inline nlohmann::ordered_json to_json(const ZeroshotResult& r) {
  auto recs = nlohmann::ordered_json::array();
  for (const auto& o : r.records)
    recs.push_back({{"patient_id", o.patient_id},
                    {"label", o.label},
                    {"prediction", o.prediction ? nlohmann::ordered_json(*o.prediction) : nlohmann::ordered_json()},
                    {"response", o.response}});
  return {{"parse_errors", r.parse_errors}, {"calls", r.calls}, {"cache_hits", r.cache_hits},
          {"records", std::move(recs)}};
}

/// Throws if any message still matches a masking rule.
inline void assert_no_leaks(const std::vector<ChatMessage>& messages) {
  for (const auto& m : messages) {
    const auto leaks = find_leaks(m.content);
    if (!leaks.empty())
      throw Error("refusing to send " + to_string(m.role) + " message: unmasked " + leaks.front().rule + " match");
  }
}

/// De-identify, translate, extract and parse each record. Parse failures are
/// counted and excluded from the metrics.
inline ZeroshotResult run_zeroshot(const std::vector<data::PatientRecord>& records, ChatClient& client,
                                   ResponseCache& cache, const ZeroshotOptions& opt = {}) {
  if (opt.concurrency < 1) throw ConfigError("zeroshot.concurrency must be >= 1");
  ZeroshotResult res;
  res.records.resize(records.size());
  std::atomic<std::size_t> next{0}, calls{0}, hits{0};
  auto ask = [&](const std::string& id, const std::vector<ChatMessage>& messages) {
    const std::string hash = prompt_hash(messages);
    if (opt.use_cache) {
      if (auto cached = cache.get(id, hash)) {
        ++hits;
        return *cached;
      }
    }
    assert_no_leaks(messages);
    ++calls;
    std::string reply = client.complete(messages);
    cache.put(id, hash, reply);
    return reply;
  };
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto masked = deidentified(records[i]);
      const auto bundle = build_prompts(masked, opt.summary);
      // A translation may reintroduce identifiers, so it is masked again.
      const std::string translation = deidentify(ask(masked.patient_id, bundle.translation_conversation()));
      const std::string answer = ask(masked.patient_id, bundle.extraction_conversation(translation));
      auto& out = res.records[i];
      out.patient_id = records[i].patient_id;
      out.label = records[i].label;
      out.response = answer;
      out.prediction = parse_label(answer);
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(opt.concurrency), records.size());
  if (workers <= 1) {
    work();
  } else {
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        try {
          work();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = records.size();
        }
      });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  std::vector<int> preds, labels;
  for (const auto& o : res.records) {
    if (!o.prediction) {
      ++res.parse_errors;
      continue;
    }
    preds.push_back(*o.prediction);
    labels.push_back(o.label);
  }
  res.calls = calls.load();
  res.cache_hits = hits.load();
  if (!records.empty()) {
    res.counts = eval::confusion(preds, labels);
    res.report.add_fold(res.counts);
  }
  if (res.parse_errors > 0) spdlog::warn("{} responses could not be parsed as yes/no", res.parse_errors);
  return res;
}

}  // namespace cvrm::zeroshot
