// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"

namespace cvrm::hencoder {

enum class Pooling { cls, average };

inline std::string to_string(Pooling p) { return p == Pooling::cls ? "cls" : "average"; }

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "cls") return Pooling::cls;
  if (s == "average" || s == "avg" || s == "mean") return Pooling::average;
  throw ConfigError("pooling must be 'cls' or 'average', got '" + s + "'");
}

struct EncoderConfig {
  int embed_dim = 512;
  int layers = 3;
  int heads = 4;
  int dim_head = 32;
  int block_size = 32;
  int ff_multiplier = 4;
  std::vector<int> head_hidden{256, 128};
  double head_dropout = 0.2;
  int budget = 8192;
  Pooling pooling = Pooling::cls;
  double rope_base = 10000.0;

  int inner_dim() const { return heads * dim_head; }
  int ff_dim() const { return embed_dim * ff_multiplier; }
  bool reserve_cls() const { return pooling == Pooling::cls; }

  void validate() const {
    auto pow2 = [](int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); };
    if (embed_dim <= 0 || layers < 0 || heads <= 0 || dim_head <= 0 || ff_multiplier <= 0)
      throw ConfigError("encoder dimensions must be positive");
    if (dim_head % 2 != 0) throw ConfigError("dim_head must be even for rotary embeddings");
    if (heads * dim_head > embed_dim) throw ConfigError("heads * dim_head must not exceed embed_dim");
    if (!pow2(block_size) || block_size < 2)
      throw ConfigError("block_size must be a power of two >= 2");
    if (!pow2(budget)) throw ConfigError("budget must be a power of two");
    if (budget % block_size != 0) throw ConfigError("budget must be divisible by block_size");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0))
      throw ConfigError("head_dropout must be in [0, 1)");
    for (int h : head_hidden)
      if (h <= 0) throw ConfigError("head_hidden entries must be positive");
    if (!(rope_base > 1.0)) throw ConfigError("rope_base must exceed 1");
  }
};

inline nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"embed_dim", c.embed_dim},       {"layers", c.layers},
          {"heads", c.heads},               {"dim_head", c.dim_head},
          {"block_size", c.block_size},     {"ff_multiplier", c.ff_multiplier},
          {"head_hidden", c.head_hidden},   {"head_dropout", c.head_dropout},
          {"budget", c.budget},             {"pooling", to_string(c.pooling)},
          {"rope_base", c.rope_base}};
}

/// Reads known fields over the defaults; unknown keys are rejected.
inline EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig c = {}) {
  if (!j.is_object()) throw ConfigError("encoder config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "embed_dim") c.embed_dim = val.get<int>();
      else if (key == "layers") c.layers = val.get<int>();
      else if (key == "heads") c.heads = val.get<int>();
      else if (key == "dim_head") c.dim_head = val.get<int>();
      else if (key == "block_size") c.block_size = val.get<int>();
      else if (key == "ff_multiplier") c.ff_multiplier = val.get<int>();
      else if (key == "head_hidden") c.head_hidden = val.get<std::vector<int>>();
      else if (key == "head_dropout") c.head_dropout = val.get<double>();
      else if (key == "budget") c.budget = val.get<int>();
      else if (key == "pooling") c.pooling = pooling_from_string(val.get<std::string>());
      else if (key == "rope_base") c.rope_base = val.get<double>();
      else throw ConfigError("unknown encoder config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("encoder config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace cvrm::hencoder
