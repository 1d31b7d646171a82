// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"

namespace cvrm::tok {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kNumSpecials = 3;

/// Word-start marker prepended to every whitespace-delimited word.
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581

/// Byte-pair-encoding vocabulary: specials, the base alphabet (sorted), then
/// one token per merge in merge order.
class Vocab {
 public:
  Vocab() = default;

  /// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties go to
  /// the lexicographically smallest pair) until `vocab_size` tokens exist or
  /// no pair occurs at least twice. Merges never cross word boundaries.
  static Vocab train(const std::vector<std::string>& texts, std::size_t vocab_size) {
    std::map<std::string, std::int64_t> word_freq;
    for (const auto& t : texts)
      for (auto& w : text::split_whitespace(t)) ++word_freq[std::move(w)];
    if (word_freq.empty()) throw ConfigError("cannot train BPE on an empty corpus");

    std::map<std::string, int> alphabet_index;
    std::vector<std::vector<std::string>> word_chars;
    word_chars.reserve(word_freq.size());
    alphabet_index[std::string(kWordMarker)] = 0;
    for (const auto& [w, f] : word_freq) {
      auto chars = text::utf8_chars(w);
      for (const auto& c : chars) alphabet_index[c] = 0;
      word_chars.push_back(std::move(chars));
    }

    Vocab v;
    for (auto& [sym, id] : alphabet_index) {
      id = static_cast<int>(kNumSpecials + v.alphabet_.size());
      v.alphabet_.push_back(sym);
    }
    if (vocab_size <= kNumSpecials + v.alphabet_.size())
      throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                        " must exceed specials + base symbols (" +
                        std::to_string(kNumSpecials + v.alphabet_.size()) + ")");
    v.rebuild_index();

    struct Word {
      std::vector<int> syms;
      std::int64_t freq;
    };
    std::vector<Word> words;
    words.reserve(word_freq.size());
    {
      std::size_t k = 0;
      const int marker = alphabet_index[std::string(kWordMarker)];
      for (const auto& [w, f] : word_freq) {
        Word word{{marker}, f};
        for (const auto& c : word_chars[k]) word.syms.push_back(alphabet_index[c]);
        words.push_back(std::move(word));
        ++k;
      }
    }

    std::unordered_map<std::uint64_t, std::int64_t> pair_count;
    auto add_pairs = [&](const Word& w, std::int64_t sign) {
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i)
        pair_count[pack(w.syms[i], w.syms[i + 1])] += sign * w.freq;
    };
    for (const auto& w : words) add_pairs(w, +1);

    while (v.size() < vocab_size) {
      std::uint64_t best = 0;
      std::int64_t best_count = 0;
      for (const auto& [key, count] : pair_count) {
        if (count < 2 || count < best_count) continue;
        if (count > best_count || v.pair_less(key, best)) {
          best = key;
          best_count = count;
        }
      }
      if (best_count < 2) break;
      const int a = static_cast<int>(best >> 32), b = static_cast<int>(best & 0xffffffffu);
      const int merged = v.add_merge(a, b);
      for (auto& w : words) {
        if (std::find(w.syms.begin(), w.syms.end(), a) == w.syms.end()) continue;
        bool has_pair = false;
        for (std::size_t i = 0; i + 1 < w.syms.size(); ++i)
          if (w.syms[i] == a && w.syms[i + 1] == b) {
            has_pair = true;
            break;
          }
        if (!has_pair) continue;
        add_pairs(w, -1);
        std::vector<int> next;
        next.reserve(w.syms.size());
        for (std::size_t i = 0; i < w.syms.size(); ++i) {
          if (i + 1 < w.syms.size() && w.syms[i] == a && w.syms[i + 1] == b) {
            next.push_back(merged);
            ++i;
          } else {
            next.push_back(w.syms[i]);
          }
        }
        w.syms = std::move(next);
        add_pairs(w, +1);
      }
      for (auto it = pair_count.begin(); it != pair_count.end();)
        it = it->second == 0 ? pair_count.erase(it) : std::next(it);
    }
    return v;
  }

  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }

  /// Token text; specials render as <pad>, <unk>, <cls>.
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

  /// Id of a non-special token, or -1.
  int id_of(std::string_view tok) const {
    auto it = token_to_id_.find(std::string(tok));
    return it == token_to_id_.end() ? -1 : it->second;
  }

  /// Tokenizes one text (no specials, no padding).
  std::vector<int> tokenize(std::string_view s) const {
    std::vector<int> out;
    for (const auto& w : text::split_whitespace(s)) encode_word(w, out);
    return out;
  }

  /// Inverse of tokenize up to whitespace normalization. Specials are dropped.
  std::string decode(std::span<const int> ids) const {
    std::string raw;
    for (int id : ids) {
      if (id < kNumSpecials) continue;
      raw += token(id);
    }
    std::string spaced;
    spaced.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size();) {
      if (raw.compare(i, kWordMarker.size(), kWordMarker) == 0) {
        spaced += ' ';
        i += kWordMarker.size();
      } else {
        spaced += raw[i++];
      }
    }
    return text::normalize_whitespace(spaced);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["specials"] = {{"PAD", kPad}, {"UNK", kUnk}, {"CLS", kCls}};
    j["alphabet"] = alphabet_;
    auto m = nlohmann::ordered_json::array();
    for (const auto& [a, b] : merges_) m.push_back({a, b});
    j["merges"] = std::move(m);
    return j;
  }

  static Vocab from_json(const nlohmann::json& j) {
    if (!j.contains("alphabet") || !j.contains("merges"))
      throw ParseError("vocab JSON needs 'alphabet' and 'merges'");
    const auto& sp = j.value("specials", nlohmann::json::object());
    if (sp.value("PAD", kPad) != kPad || sp.value("UNK", kUnk) != kUnk ||
        sp.value("CLS", kCls) != kCls)
      throw ValidationError("specials", "expected PAD=0, UNK=1, CLS=2");
    Vocab v;
    v.alphabet_ = j["alphabet"].get<std::vector<std::string>>();
    v.rebuild_index();
    for (const auto& m : j["merges"]) {
      if (!m.is_array() || m.size() != 2) throw ParseError("each merge must be a pair");
      const int a = v.id_of(m[0].get<std::string>()), b = v.id_of(m[1].get<std::string>());
      if (a < 0 || b < 0) throw ValidationError("merges", "merge references unknown token");
      v.add_merge(a, b);
    }
    return v;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write vocab: " + path.string());
    out << to_json().dump() << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open vocab: " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("vocab JSON: ") + e.what());
    }
  }

 private:
  static std::uint64_t pack(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  bool pair_less(std::uint64_t x, std::uint64_t y) const {
    const auto& xa = token(static_cast<int>(x >> 32));
    const auto& ya = token(static_cast<int>(y >> 32));
    if (xa != ya) return xa < ya;
    return token(static_cast<int>(x & 0xffffffffu)) < token(static_cast<int>(y & 0xffffffffu));
  }

  void rebuild_index() {
    id_to_token_ = {"<pad>", "<unk>", "<cls>"};
    token_to_id_.clear();
    merge_lookup_.clear();
    merges_.clear();
    for (const auto& sym : alphabet_) {
      token_to_id_[sym] = static_cast<int>(id_to_token_.size());
      id_to_token_.push_back(sym);
    }
  }

  /// Registers merge (a, b); returns the id of the merged token. A merged
  /// string that already exists (reachable by another merge path) keeps its id.
  int add_merge(int a, int b) {
    std::string merged = token(a) + token(b);
    int id;
    auto it = token_to_id_.find(merged);
    if (it != token_to_id_.end()) {
      id = it->second;
    } else {
      id = static_cast<int>(id_to_token_.size());
      token_to_id_[merged] = id;
      id_to_token_.push_back(merged);
    }
    merge_lookup_[pack(a, b)] = {static_cast<int>(merges_.size()), id};
    merges_.emplace_back(token(a), token(b));
    return id;
  }

  void encode_word(std::string_view w, std::vector<int>& out) const {
    std::vector<int> syms;
    syms.push_back(id_of(kWordMarker));
    if (syms.back() < 0) syms.back() = kUnk;
    for (const auto& c : text::utf8_chars(w)) {
      const int id = id_of(c);
      syms.push_back(id < 0 ? kUnk : id);
    }
    while (syms.size() > 1) {
      int best_rank = -1, best_id = -1;
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = merge_lookup_.find(pack(syms[i], syms[i + 1]));
        if (it == merge_lookup_.end()) continue;
        if (best_rank < 0 || it->second.first < best_rank) {
          best_rank = it->second.first;
          best_id = it->second.second;
          best_pos = i;
        }
      }
      if (best_rank < 0) break;
      const int a = syms[best_pos], b = syms[best_pos + 1];
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          next.push_back(best_id);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
    out.insert(out.end(), syms.begin(), syms.end());
  }

  std::vector<std::string> alphabet_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::unordered_map<std::uint64_t, std::pair<int, int>> merge_lookup_;  // pair -> (rank, id)
};

/// Fixed-length model input. `mask[i] == 1` marks a real token; real tokens
/// form a prefix and every masked slot holds kPad.
struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  std::size_t length() const { return ids.size(); }
  std::size_t real_length() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
};

inline bool is_power_of_two(std::size_t n) { return n > 0 && std::has_single_bit(n); }

/// Concatenates `texts` oldest to newest, tokenizes, keeps the most recent
/// tokens that fit (budget - 1 when a CLS slot is reserved at position 0) and
/// pads with PAD to exactly `budget`.
inline TokenSequence encode(const Vocab& vocab, const std::vector<std::string>& texts,
                            std::size_t budget, bool reserve_cls) {
  if (!is_power_of_two(budget) || budget < 2)
    throw ConfigError("token budget must be a power of two >= 2, got " + std::to_string(budget));
  std::string joined;
  for (const auto& t : texts) {
    if (!joined.empty()) joined += ' ';
    joined += t;
  }
  const auto tokens = vocab.tokenize(joined);
  const std::size_t room = reserve_cls ? budget - 1 : budget;
  const std::size_t keep = std::min(room, tokens.size());

  TokenSequence seq;
  seq.ids.assign(budget, kPad);
  seq.mask.assign(budget, 0);
  std::size_t pos = 0;
  if (reserve_cls) {
    seq.ids[0] = kCls;
    seq.mask[0] = 1;
    pos = 1;
  }
  for (std::size_t i = tokens.size() - keep; i < tokens.size(); ++i, ++pos) {
    seq.ids[pos] = tokens[i];
    seq.mask[pos] = 1;
  }
  return seq;
}

}  // namespace cvrm::tok
