// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/data/synth.hpp"
#include "cvrm/zeroshot/prompts.hpp"

namespace cvrm::zeroshot {

/// Request failed after all attempts, or the endpoint rejected it.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, int attempts)
      : Error(what + " (status " + std::to_string(status) + ", " + std::to_string(attempts) + " attempt" +
              (attempts == 1 ? "" : "s") + ")"),
        status_(status),
        attempts_(attempts) {}
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  int attempts_;
};

/// Stable 12-hex digest of a conversation.
inline std::string prompt_hash(const std::vector<ChatMessage>& messages) {
  return text::hex64(text::fnv1a(to_json(messages).dump())).substr(0, 12);
}

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the assistant reply to `messages`.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::atomic<std::size_t> calls_{0};
};

/// Offline backend. A translation request is answered with the consult text
/// unchanged; an extraction request is answered by the planted labelling rule
/// applied to the preceding assistant turn.
class MockClient : public ChatClient {
 public:
  explicit MockClient(bool inverted = false) : inverted_(inverted) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    ++calls_;
    if (messages.empty()) throw ValidationError("messages", "empty conversation");
    const auto& last = messages.back();
    if (last.content.rfind(kTranslationPrompt, 0) == 0) {
      auto body = last.content.substr(kTranslationPrompt.size());
      return std::string(text::trim(body));
    }
    std::string context;
    for (const auto& m : messages)
      if (m.role == Role::assistant) context = m.content;
    const bool yes = (data::planted_label(context) == 1) != inverted_;
    return yes ? "yes" : "no";
  }

 private:
  bool inverted_;
};

struct HttpConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string model;
  /// JSON pointer to the assistant text in the response body.
  std::string response_path = "/choices/0/message/content";
  std::string api_key_env = "CHAT_API_KEY";
  int timeout_seconds = 60;
  int max_attempts = 3;
  int backoff_ms = 1000;
};

/// JSON POST {model, messages} with bearer authentication. Network errors,
/// 429 and 5xx are retried with exponential backoff.
class HttpClient : public ChatClient {
 public:
  explicit HttpClient(HttpConfig cfg) : cfg_(std::move(cfg)) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
    api_key_ = key;
    if (cfg_.endpoint.empty()) throw ConfigError("zeroshot.endpoint is required for the http backend");
    if (cfg_.max_attempts < 1) throw ConfigError("zeroshot.max_attempts must be >= 1");
    const auto scheme = cfg_.endpoint.find("://");
    if (scheme == std::string::npos) throw ConfigError("zeroshot.endpoint must include a scheme: " + cfg_.endpoint);
    const auto slash = cfg_.endpoint.find('/', scheme + 3);
    base_ = cfg_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
    try {
      pointer_ = nlohmann::json::json_pointer(cfg_.response_path);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("zeroshot.response_path is not a JSON pointer: " + cfg_.response_path);
    }
  }

  std::string complete(const std::vector<ChatMessage>& messages) override {
    const std::string body = nlohmann::ordered_json{{"model", cfg_.model}, {"messages", to_json(messages)}}.dump();
    const std::string hash = prompt_hash(messages);
    httplib::Client client(base_);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    client.set_write_timeout(cfg_.timeout_seconds);
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}, {"api-key", api_key_}};
    int status = 0;
    std::string reason;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      ++calls_;
      spdlog::info("chat request {} attempt {}", hash, attempt);
      auto res = client.Post(path_, headers, body, "application/json");
      if (res) {
        status = res->status;
        if (status == 200) return extract(res->body);
        if (status == 401 || status == 403) throw TransportError("authentication failed", status, attempt);
        const bool transient = status == 429 || status >= 500;
        if (!transient) throw TransportError("request rejected: " + res->body.substr(0, 200), status, attempt);
        reason = status == 429 ? "rate limited" : "server error";
      } else {
        status = 0;
        reason = "network error: " + httplib::to_string(res.error());
      }
      spdlog::warn("chat request {} failed: {}", hash, reason);
      if (attempt < cfg_.max_attempts)
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(cfg_.backoff_ms) << (attempt - 1)));
    }
    throw TransportError(reason, status, cfg_.max_attempts);
  }

  std::string extract(const std::string& body) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed response: ") + e.what(), 200, 1);
    }
    if (!j.contains(pointer_) || !j.at(pointer_).is_string())
      throw TransportError("malformed response: no string at " + cfg_.response_path, 200, 1);
    return j.at(pointer_).get<std::string>();
  }

 private:
  HttpConfig cfg_;
  std::string api_key_;
  std::string base_;
  std::string path_;
  nlohmann::json::json_pointer pointer_;
};

}  // namespace cvrm::zeroshot
