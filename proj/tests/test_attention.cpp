// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cvrm/common/random.hpp"
#include "cvrm/hencoder/attention.hpp"
#include "cvrm/hencoder/rope.hpp"

using namespace cvrm;
using namespace cvrm::hencoder;

namespace {

Matrix<double> randn(Index r, Index c, Rng& rng) {
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, 1.0);
  return m;
}

std::vector<std::uint8_t> prefix_mask(Index len, Index real) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(len), 0);
  std::fill(m.begin(), m.begin() + real, 1);
  return m;
}

// Rows grouped in aligned runs of `group` share one random row.
Matrix<double> piecewise(Index len, Index width, Index group, Rng& rng) {
  const auto base = randn(len / group, width, rng);
  Matrix<double> m(len, width);
  for (Index r = 0; r < len; ++r) m.row(r) = base.row(r / group);
  return m;
}

}  // namespace

struct Geometry {
  Index len, block;
};

class SegmentCoverage : public ::testing::TestWithParam<Geometry> {};

TEST_P(SegmentCoverage, EveryKeyAttendedExactlyOnce) {
  const auto [len, block] = GetParam();
  std::vector<std::vector<int>> hits(static_cast<std::size_t>(len), std::vector<int>(static_cast<std::size_t>(len), 0));
  for (const auto& s : attention_segments(len, block)) {
    const Index unit = Index{1} << s.level;
    for (Index r = s.row0; r < s.row1; ++r)
      for (Index t = s.key0; t < s.key1; ++t)
        for (Index j = t * unit; j < (t + 1) * unit; ++j) ++hits[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
  }
  for (Index r = 0; r < len; ++r)
    for (Index j = 0; j < len; ++j) ASSERT_EQ(hits[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)], 1) << r << "," << j;
}

TEST_P(SegmentCoverage, NeighbouringBlocksAreRaw) {
  const auto [len, block] = GetParam();
  for (const auto& s : attention_segments(len, block)) {
    if (s.level != 0) continue;
    const Index qb = s.row0 / block;
    EXPECT_EQ(s.key0, std::max<Index>(0, (qb - 1) * block));
    EXPECT_EQ(s.key1, std::min(len, (qb + 2) * block));
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, SegmentCoverage,
                         ::testing::Values(Geometry{8, 8}, Geometry{16, 8}, Geometry{32, 8}, Geometry{64, 4},
                                           Geometry{128, 8}, Geometry{256, 2}));

TEST(Attention, LevelCount) {
  EXPECT_EQ(attention_levels(32, 32), 1);
  EXPECT_EQ(attention_levels(64, 32), 1);
  EXPECT_EQ(attention_levels(128, 32), 2);
  EXPECT_EQ(attention_levels(8192, 32), 8);
}

TEST(Attention, MatchesDenseWhenAllKeysAreRaw) {
  Rng rng(1);
  for (Index len : {16, 32}) {
    const auto q = randn(len, 8, rng), k = randn(len, 8, rng), v = randn(len, 8, rng);
    const auto mask = prefix_mask(len, len - 3);
    const auto h = hierarchical_attention<double>(q, k, v, mask, 2, 16);
    const auto d = dense_attention<double>(q, k, v, mask, 2);
    EXPECT_LT((h - d).cwiseAbs().maxCoeff(), 1e-12) << len;
  }
}

TEST(Attention, ExactWhenCoarseTokensSummarizeIdenticalKeys) {
  // Keys and values constant inside every coarse token make the log-count
  // weighting exact, so the result must equal dense attention.
  Rng rng(2);
  const Index len = 256, block = 8;
  const Index group = Index{1} << (attention_levels(len, block) - 1);
  for (Index real : {256, 200, 37}) {
    const auto q = randn(len, 16, rng);
    const auto k = piecewise(len, 16, group, rng), v = piecewise(len, 16, group, rng);
    const auto mask = prefix_mask(len, real);
    const auto h = hierarchical_attention<double>(q, k, v, mask, 2, block);
    const auto d = dense_attention<double>(q, k, v, mask, 2);
    EXPECT_LT((h - d).cwiseAbs().maxCoeff(), 1e-10) << real;
  }
}

TEST(Attention, PadQueriesOutputZeroAndPadKeysGetNoWeight) {
  Rng rng(3);
  const Index len = 64;
  const auto q = randn(len, 4, rng), k = randn(len, 4, rng), v = randn(len, 4, rng);
  const auto mask = prefix_mask(len, 21);
  const auto out = hierarchical_attention<double>(q, k, v, mask, 1, 8);
  EXPECT_EQ(out.bottomRows(len - 21).cwiseAbs().maxCoeff(), 0.0);
  const auto w = attention_weights<double>(q, k, v, mask, 8);
  for (Index r = 0; r < len; ++r) {
    if (r >= 21) {
      EXPECT_TRUE(w[static_cast<std::size_t>(r)].empty());
      continue;
    }
    double total = 0.0;
    for (const auto& item : w[static_cast<std::size_t>(r)]) {
      const Index first = item.index << item.level;
      if (first >= 21) EXPECT_EQ(item.weight, 0.0);
      total += item.weight;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Attention, InvariantToPadContent) {
  Rng rng(4);
  const Index len = 128;
  auto q = randn(len, 8, rng), k = randn(len, 8, rng), v = randn(len, 8, rng);
  const auto mask = prefix_mask(len, 50);
  const auto a = hierarchical_attention<double>(q, k, v, mask, 2, 8);
  k.bottomRows(78) = randn(78, 8, rng) * 100.0;
  v.bottomRows(78) = randn(78, 8, rng) * 100.0;
  const auto b = hierarchical_attention<double>(q, k, v, mask, 2, 8);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  const Index len = 64, heads = 2, block = 4;
  Matrix<double> q = randn(len, 8, rng), k = randn(len, 8, rng), v = randn(len, 8, rng);
  const auto mask = prefix_mask(len, 45);
  const auto probe = randn(len, 8, rng);
  AttentionCache<double> cache;
  hierarchical_attention<double>(q, k, v, mask, heads, block, &cache);
  const auto g = hierarchical_attention_backward<double>(q, mask, heads, block, cache, probe);
  auto objective = [&] {
    return (hierarchical_attention<double>(q, k, v, mask, heads, block).array() * probe.array()).sum();
  };
  double worst = 0.0;
  for (auto [x, dx] : {std::pair{&q, &g.dq}, std::pair{&k, &g.dk}, std::pair{&v, &g.dv}}) {
    for (int t = 0; t < 40; ++t) {
      const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x->size())));
      const double orig = x->data()[i];
      x->data()[i] = orig + 1e-6;
      const double up = objective();
      x->data()[i] = orig - 1e-6;
      const double down = objective();
      x->data()[i] = orig;
      const double num = (up - down) / 2e-6, ana = dx->data()[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-8, std::abs(num) + std::abs(ana)));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Attention, RejectsBadShapes) {
  const Matrix<double> x = Matrix<double>::Zero(48, 4);
  const std::vector<std::uint8_t> m(48, 1);
  EXPECT_THROW(hierarchical_attention<double>(x, x, x, m, 1, 16), ShapeError);
  const Matrix<double> y = Matrix<double>::Zero(16, 4);
  const std::vector<std::uint8_t> m16(16, 1);
  EXPECT_THROW(hierarchical_attention<double>(y, y, y, m16, 1, 32), ShapeError);
  EXPECT_THROW(hierarchical_attention<double>(y, y, y, m16, 1, 6), ShapeError);
  EXPECT_THROW(hierarchical_attention<double>(y, y, y, m, 1, 8), ShapeError);
}

TEST(Rope, InverseUndoesAndNormIsPreserved) {
  Rng rng(6);
  const auto x = randn(10, 16, rng);
  std::vector<double> pos(10);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<double>(i * 37);
  const auto y = apply_rope<double>(x, 2, pos, 10000.0);
  EXPECT_LT((apply_rope<double>(y, 2, pos, 10000.0, true) - x).cwiseAbs().maxCoeff(), 1e-12);
  for (Index r = 0; r < 10; ++r) EXPECT_NEAR(y.row(r).norm(), x.row(r).norm(), 1e-12);
}

TEST(Rope, TableMatchesDirectComputation) {
  Rng rng(7);
  const auto x = randn(32, 24, rng);
  std::vector<double> pos(32);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<double>(i);
  const RopeTable<double> table(64, 8, 10000.0);
  EXPECT_LT((table.apply(x) - apply_rope<double>(x, 3, pos, 10000.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((table.apply(table.apply(x), true) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rope, PositionZeroIsIdentityAndFirstPairRotatesByPosition) {
  Matrix<double> x(1, 4);
  x << 1, 0, 1, 0;
  const double zero[1] = {0.0}, three[1] = {3.0};
  EXPECT_EQ(apply_rope<double>(x, 1, zero, 10000.0), x);
  const auto y = apply_rope<double>(x, 1, three, 10000.0);
  EXPECT_NEAR(y(0, 0), std::cos(3.0), 1e-15);
  EXPECT_NEAR(y(0, 1), std::sin(3.0), 1e-15);
  EXPECT_NEAR(y(0, 2), std::cos(3.0 * std::pow(10000.0, -0.5)), 1e-15);
}

TEST(Rope, RejectsOddHeadWidth) {
  const Matrix<double> x = Matrix<double>::Zero(2, 6);
  const std::vector<double> pos = {0, 1};
  EXPECT_THROW(apply_rope<double>(x, 2, pos, 10000.0), ShapeError);
}
