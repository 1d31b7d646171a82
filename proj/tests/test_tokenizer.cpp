// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "cvrm/data/synth.hpp"
#include "cvrm/tokenizer/bpe.hpp"

using namespace cvrm;
using namespace cvrm::tok;

namespace {

std::vector<std::string> corpus_texts(std::size_t n) {
  std::vector<std::string> out;
  for (const auto& r : data::synthesize_corpus(n, 0.2, 9).records)
    for (const auto& c : r.consults) out.push_back(c.text);
  return out;
}

}  // namespace

TEST(Bpe, FirstMergeIsMostFrequentPair) {
  // "ab" occurs 3 times across words, "bc" twice.
  const auto v = Vocab::train({"ab ab abc bc"}, 64);
  ASSERT_FALSE(v.merges().empty());
  // The word marker precedes every word, so the marker+a pair ties "ab" at 3;
  // ties break on the smaller pair.
  const auto& [a, b] = v.merges().front();
  EXPECT_TRUE((a == "a" && b == "b") || (a == std::string(kWordMarker) && b == "a")) << a << "+" << b;
}

TEST(Bpe, StopsWhenNoPairRepeats) {
  const auto v = Vocab::train({"xy"}, 1000);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.size(), kNumSpecials + v.alphabet().size());
}

TEST(Bpe, RespectsVocabSize) {
  const auto v = Vocab::train(corpus_texts(50), 200);
  EXPECT_EQ(v.size(), 200u);
}

TEST(Bpe, RoundTripUpToWhitespace) {
  const auto texts = corpus_texts(60);
  const auto v = Vocab::train(texts, 400);
  for (const auto& t : texts) {
    const auto ids = v.tokenize(t);
    EXPECT_EQ(v.decode(ids), text::normalize_whitespace(t));
  }
  EXPECT_EQ(v.decode(v.tokenize("  twee   woorden \n")), "twee woorden");
}

TEST(Bpe, UnknownCharactersMapToUnk) {
  const auto v = Vocab::train({"aa bb aa bb"}, 16);
  const auto ids = v.tokenize("aa q");
  EXPECT_NE(std::find(ids.begin(), ids.end(), kUnk), ids.end());
}

TEST(Bpe, TooSmallVocabIsConfigError) {
  EXPECT_THROW(Vocab::train({"abcdef"}, 5), ConfigError);
  EXPECT_THROW(Vocab::train({}, 100), ConfigError);
}

TEST(Bpe, SaveLoadPreservesEncoding) {
  const auto texts = corpus_texts(30);
  const auto v = Vocab::train(texts, 300);
  const auto path = std::filesystem::temp_directory_path() / "cvrm_test_vocab.json";
  v.save(path);
  const auto w = Vocab::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.merges(), v.merges());
  for (const auto& t : texts) EXPECT_EQ(w.tokenize(t), v.tokenize(t));
}

TEST(Bpe, TrainingIsDeterministic) {
  const auto texts = corpus_texts(30);
  EXPECT_EQ(Vocab::train(texts, 300).merges(), Vocab::train(texts, 300).merges());
}

TEST(Encode, PadsToBudgetWithCls) {
  const auto v = Vocab::train({"een twee drie een twee drie"}, 40);
  const auto seq = encode(v, {"een twee"}, 16, true);
  ASSERT_EQ(seq.length(), 16u);
  EXPECT_EQ(seq.ids[0], kCls);
  EXPECT_EQ(seq.mask[0], 1);
  const auto n = seq.real_length();
  EXPECT_EQ(n, 1 + v.tokenize("een twee").size());
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(seq.mask[i], i < n ? 1 : 0);
    if (i >= n) EXPECT_EQ(seq.ids[i], kPad);
  }
}

TEST(Encode, KeepsMostRecentTokens) {
  const auto v = Vocab::train({"oud nieuw oud nieuw"}, 30);
  const auto all = v.tokenize("oud oud oud nieuw");
  const auto seq = encode(v, {"oud oud", "oud nieuw"}, 4, false);
  ASSERT_GE(all.size(), 4u);
  EXPECT_EQ(std::vector<int>(seq.ids.begin(), seq.ids.end()),
            std::vector<int>(all.end() - 4, all.end()));
  EXPECT_EQ(seq.real_length(), 4u);
  const auto with_cls = encode(v, {"oud oud", "oud nieuw"}, 4, true);
  EXPECT_EQ(with_cls.ids[0], kCls);
  EXPECT_EQ(std::vector<int>(with_cls.ids.begin() + 1, with_cls.ids.end()),
            std::vector<int>(all.end() - 3, all.end()));
}

TEST(Encode, BudgetMustBePowerOfTwo) {
  const auto v = Vocab::train({"aa aa"}, 12);
  EXPECT_THROW(encode(v, {"aa"}, 12, true), ConfigError);
  EXPECT_THROW(encode(v, {"aa"}, 1, false), ConfigError);
  EXPECT_NO_THROW(encode(v, {"aa"}, 2, false));
}
