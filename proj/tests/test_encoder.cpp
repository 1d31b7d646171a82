// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "cvrm/eval/trainer.hpp"
#include "cvrm/hencoder/model.hpp"
#include "cvrm/nn/grad_check.hpp"

using namespace cvrm;
using namespace cvrm::hencoder;
using nn::Matrix;

namespace {

EncoderConfig tiny_config(Pooling pooling = Pooling::cls) {
  EncoderConfig c;
  c.embed_dim = 16;
  c.layers = 2;
  c.heads = 2;
  c.dim_head = 8;
  c.block_size = 4;
  c.ff_multiplier = 2;
  c.head_hidden = {8};
  c.head_dropout = 0.25;
  c.budget = 32;
  c.pooling = pooling;
  return c;
}

tok::TokenSequence sequence(std::size_t len, std::size_t real, bool cls, Rng& rng, int vocab = 20) {
  tok::TokenSequence s;
  s.ids.assign(len, tok::kPad);
  s.mask.assign(len, 0);
  for (std::size_t i = 0; i < real; ++i) {
    s.ids[i] = cls && i == 0 ? tok::kCls
                             : tok::kNumSpecials + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - tok::kNumSpecials)));
    s.mask[i] = 1;
  }
  return s;
}

std::vector<const tok::TokenSequence*> ptrs(const std::vector<tok::TokenSequence>& v) {
  std::vector<const tok::TokenSequence*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

}  // namespace

TEST(EncoderConfig, ValidationAndJson) {
  EXPECT_NO_THROW(EncoderConfig{}.validate());
  auto bad = tiny_config();
  bad.dim_head = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.budget = 48;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.heads = 1;
  EXPECT_NO_THROW(bad.validate());
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  const auto c = tiny_config(Pooling::average);
  const auto back = encoder_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(encoder_config_from_json({{"embedding", 3}}), ConfigError);
  EXPECT_THROW(encoder_config_from_json({{"layers", "two"}}), ConfigError);
  EXPECT_EQ(pooling_from_string("avg"), Pooling::average);
  EXPECT_THROW(pooling_from_string("max"), ConfigError);
}

TEST(HTrans, HeadInputWidthIsTextPlusStructured) {
  EncoderConfig c;
  c.budget = 64;
  c.block_size = 32;
  HTransModel<float> fused(c, 100, 771, 1);
  EXPECT_EQ(fused.head_input_dim(), 512 + 771);
  HTransModel<float> text(c, 100, 0, 1);
  EXPECT_EQ(text.head_input_dim(), 512);
}

TEST(HTrans, GradientsCheckForBothPoolingModes) {
  for (auto pooling : {Pooling::cls, Pooling::average}) {
    Rng rng(2);
    HTransModel<double> m(tiny_config(pooling), 20, 3, 5);
    const bool cls = pooling == Pooling::cls;
    std::vector<tok::TokenSequence> seqs = {sequence(32, 32, cls, rng), sequence(32, 13, cls, rng),
                                            sequence(32, 5, cls, rng)};
    Matrix<double> extra(3, 3);
    for (Eigen::Index i = 0; i < extra.size(); ++i) extra.data()[i] = rng.normal(0.0, 1.0);
    const std::vector<int> y = {1, 0, 1};
    const std::vector<double> w = {0.8, 1.4};
    auto p = ptrs(seqs);
    auto g = m.params().make_grads();
    m.loss_and_grad(p, extra, y, w, 17, g);
    auto loss = [&] {
      auto scratch = m.params().make_grads();
      return m.loss_and_grad(p, extra, y, w, 17, scratch);
    };
    const auto r = nn::grad_check(m.params(), loss, g, 1e-5, 8);
    EXPECT_LT(r.max_rel_error, 1e-5) << to_string(pooling) << " worst " << r.worst_param;
  }
}

TEST(HTrans, TrimmingDoesNotChangeOutputs) {
  Rng rng(3);
  HTransModel<double> m(tiny_config(), 20, 0, 7);
  std::vector<tok::TokenSequence> seqs = {sequence(32, 6, true, rng), sequence(32, 17, true, rng),
                                          sequence(32, 32, true, rng)};
  auto p = ptrs(seqs);
  EXPECT_EQ(m.effective_length(seqs[0]), 8);
  EXPECT_EQ(m.effective_length(seqs[1]), 32);
  const auto trimmed = m.logits(p, Matrix<double>());
  m.set_trim_padding(false);
  EXPECT_EQ(m.effective_length(seqs[0]), 32);
  const auto full = m.logits(p, Matrix<double>());
  EXPECT_LT((trimmed - full).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HTrans, RealPositionsIgnoreExtraPadding) {
  Rng rng(4);
  auto c = tiny_config();
  c.budget = 64;
  HTransModel<double> m(c, 20, 0, 9);
  m.set_trim_padding(false);
  const auto s = sequence(32, 19, true, rng);
  auto longer = s;
  longer.ids.resize(64, tok::kPad);
  longer.mask.resize(64, 0);
  const auto a = m.encode_tokens(s), b = m.encode_tokens(longer);
  EXPECT_LT((a.topRows(19) - b.topRows(19)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HTrans, ThreadCountDoesNotChangeGradients) {
  Rng rng(5);
  HTransModel<double> m(tiny_config(), 20, 0, 11);
  std::vector<tok::TokenSequence> seqs;
  for (int i = 0; i < 6; ++i) seqs.push_back(sequence(32, 8 + 4 * static_cast<std::size_t>(i), true, rng));
  const std::vector<int> y = {0, 1, 0, 1, 1, 0};
  const std::vector<double> w = {1.0, 1.0};
  auto p = ptrs(seqs);
  auto g1 = m.params().make_grads(), g3 = m.params().make_grads();
  const double l1 = m.loss_and_grad(p, Matrix<double>(), y, w, 3, g1, 1);
  const double l3 = m.loss_and_grad(p, Matrix<double>(), y, w, 3, g3, 3);
  EXPECT_DOUBLE_EQ(l1, l3);
  for (std::size_t i = 0; i < g1.grads.size(); ++i)
    EXPECT_LT((g1[i] - g3[i]).cwiseAbs().maxCoeff(), 1e-12) << m.params()[i].name;
}

TEST(HTrans, ShapeErrors) {
  Rng rng(6);
  HTransModel<double> m(tiny_config(), 20, 2, 1);
  std::vector<tok::TokenSequence> seqs = {sequence(64, 10, true, rng)};
  auto p = ptrs(seqs);
  EXPECT_THROW(m.logits(p, Matrix<double>::Zero(1, 2)), ShapeError);
  seqs[0] = sequence(32, 10, true, rng);
  p = ptrs(seqs);
  EXPECT_THROW(m.logits(p, Matrix<double>::Zero(1, 3)), ShapeError);
  EXPECT_THROW(m.logits(p, Matrix<double>()), ShapeError);
  EXPECT_NO_THROW(m.logits(p, Matrix<double>::Zero(1, 2)));
}

TEST(HTrans, SameSeedSameInitialization) {
  HTransModel<float> a(tiny_config(), 20, 0, 42), b(tiny_config(), 20, 0, 42), c(tiny_config(), 20, 0, 43);
  EXPECT_EQ(a.params()[0].value, b.params()[0].value);
  EXPECT_NE(a.params()[0].value, c.params()[0].value);
}

namespace {

// Label 1 iff token 7 occurs among the real tokens.
struct ToyTask {
  std::vector<tok::TokenSequence> seqs;
  eval::Batch<float> train, val;

  explicit ToyTask(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> labels;
    for (int i = 0; i < 96; ++i) {
      auto s = sequence(32, static_cast<std::size_t>(rng.between(6, 32)), true, rng, 12);
      for (std::size_t j = 1; j < s.ids.size(); ++j)
        if (s.ids[j] == 7) s.ids[j] = 8;
      const int y = i % 3 == 0 ? 1 : 0;
      if (y) s.ids[static_cast<std::size_t>(rng.between(1, static_cast<int>(s.real_length()) - 1))] = 7;
      seqs.push_back(std::move(s));
      labels.push_back(y);
    }
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      auto& b = i < 72 ? train : val;
      b.seqs.push_back(&seqs[i]);
      b.labels.push_back(labels[i]);
    }
  }
};

eval::TrainingConfig toy_training() {
  eval::TrainingConfig t;
  t.epochs = 12;
  t.batch_size = 8;
  t.lr = 3e-3;
  return t;
}

}  // namespace

TEST(Trainer, LossDecreasesAndTaskIsLearned) {
  ToyTask task(1);
  HTransModel<float> m(tiny_config(), 12, 0, 3);
  const auto res = eval::train_model(m, task.train, task.val, toy_training(), 99);
  ASSERT_EQ(res.log.size(), 12u);
  EXPECT_LT(res.log.back().train_loss, 0.6 * res.log.front().train_loss);
  EXPECT_GE(res.best_val_f1, 0.9);
  EXPECT_EQ(res.best_val_f1, res.log[static_cast<std::size_t>(res.best_epoch - 1)].val_f1);
  const auto pred = eval::predict_all(m, task.val, 5, 1);
  EXPECT_NEAR(eval::compute_metrics(pred, task.val.labels).f1, res.best_val_f1, 1e-12);
}

TEST(Trainer, DeterministicForFixedSeed) {
  ToyTask task(2);
  auto cfg = toy_training();
  cfg.epochs = 3;
  HTransModel<float> a(tiny_config(), 12, 0, 3), b(tiny_config(), 12, 0, 3);
  const auto ra = eval::train_model(a, task.train, task.val, cfg, 5);
  const auto rb = eval::train_model(b, task.train, task.val, cfg, 5);
  for (std::size_t i = 0; i < ra.log.size(); ++i) EXPECT_EQ(ra.log[i].train_loss, rb.log[i].train_loss);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
}

TEST(Trainer, BatchesMergeTrailingSingleton) {
  std::vector<std::size_t> order(13);
  std::iota(order.begin(), order.end(), 0);
  const auto b = eval::make_batches(order, 4);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.back().size(), 5u);
  EXPECT_EQ(eval::make_batches(order, 13).size(), 1u);
}

TEST(Trainer, ConfigValidation) {
  eval::TrainingConfig t;
  EXPECT_NO_THROW(t.validate());
  t.max_folds = 6;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.test_size = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
}
