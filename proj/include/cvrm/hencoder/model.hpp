// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cvrm/common/parallel.hpp"
#include "cvrm/common/random.hpp"
#include "cvrm/hencoder/encoder.hpp"
#include "cvrm/nn/mlp_head.hpp"
#include "cvrm/tokenizer/bpe.hpp"

namespace cvrm::hencoder {

/// Hierarchical Transformer classifier: embedding, encoder stack, final
/// layer norm, pooling, and an MLP head over [pooled text | extra features].
template <typename T>
class HTransModel {
 public:
  struct SampleCache {
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;
    std::vector<LayerCache<T>> layers;
    nn::LayerNormCache<T> final_ln;
    Index rows = 0;
  };

  HTransModel(const EncoderConfig& cfg, Index vocab_size, Index extra_dim, std::uint64_t seed)
      : cfg_(cfg), extra_dim_(extra_dim) {
    cfg_.validate();
    if (vocab_size <= tok::kNumSpecials) throw ConfigError("vocab_size too small");
    Rng rng(derive_seed(seed, "htrans.init"));
    embedding_ = nn::Embedding<T>(params_, "embedding", vocab_size, cfg_.embed_dim, rng, tok::kPad);
    for (int l = 0; l < cfg_.layers; ++l)
      layers_.emplace_back(params_, "layer" + std::to_string(l), cfg_, rng);
    final_norm_ = nn::LayerNorm<T>(params_, "final_norm", cfg_.embed_dim);
    nn::MlpHeadConfig hc;
    hc.in = cfg_.embed_dim + extra_dim_;
    hc.hidden = cfg_.head_hidden;
    hc.dropout = cfg_.head_dropout;
    hc.activation = nn::Activation::gelu;
    head_ = nn::MlpHead<T>(params_, "head", hc, rng);
    rope_ = RopeTable<T>(cfg_.budget, cfg_.dim_head, cfg_.rope_base);
  }

  HTransModel(const HTransModel&) = delete;
  HTransModel& operator=(const HTransModel&) = delete;

  const EncoderConfig& config() const { return cfg_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  Index extra_dim() const { return extra_dim_; }
  Index head_input_dim() const { return head_.in_features(); }
  const nn::MlpHead<T>& head() const { return head_; }
  std::vector<EncoderLayer<T>>& layers() { return layers_; }

  /// Trailing all-pad blocks cannot influence real positions, so by default
  /// a sequence is cut to the smallest power of two (>= block_size) holding
  /// its real tokens. Turning this off runs at the full budget.
  void set_trim_padding(bool on) { trim_ = on; }
  bool trim_padding() const { return trim_; }

  /// Length the encoder actually runs at for `seq`.
  Index effective_length(const tok::TokenSequence& seq) const {
    const auto len = static_cast<Index>(seq.length());
    if (!trim_) return len;
    const auto real = static_cast<std::uint64_t>(seq.real_length());
    const auto want = static_cast<Index>(std::bit_ceil(std::max<std::uint64_t>(real, 1)));
    return std::min(len, std::max<Index>(cfg_.block_size, want));
  }

  /// Token-level encoder output (after the final layer norm).
  Matrix<T> encode_tokens(const tok::TokenSequence& seq, SampleCache* cache = nullptr) const {
    if (static_cast<Index>(seq.length()) > cfg_.budget)
      throw ShapeError("sequence longer than budget " + std::to_string(cfg_.budget));
    const Index rows = effective_length(seq);
    SampleCache local;
    SampleCache& c = cache ? *cache : local;
    c.rows = rows;
    c.ids.assign(seq.ids.begin(), seq.ids.begin() + rows);
    c.mask.assign(seq.mask.begin(), seq.mask.begin() + rows);
    c.layers.assign(cache ? layers_.size() : 0, {});
    Matrix<T> x = embedding_.forward(c.ids);
    for (std::size_t l = 0; l < layers_.size(); ++l)
      x = layers_[l].forward(x, c.mask, rope_, cache ? &c.layers[l] : nullptr);
    return final_norm_.forward(x, cache ? &c.final_ln : nullptr);
  }

  /// Pooled text feature, shape (1, embed_dim).
  Matrix<T> encode(const tok::TokenSequence& seq, SampleCache* cache = nullptr) const {
    const Matrix<T> x = encode_tokens(seq, cache);
    return pool<T>(x, std::span(seq.mask.data(), static_cast<std::size_t>(x.rows())), cfg_.pooling);
  }

  void encode_backward(const SampleCache& c, const Matrix<T>& dpooled, nn::GradBuffer<T>& g) const {
    Matrix<T> dx = pool_backward<T>(dpooled, c.mask, cfg_.pooling, c.rows);
    dx = final_norm_.backward(c.final_ln, dx, g);
    for (std::size_t l = layers_.size(); l-- > 0;)
      dx = layers_[l].backward(c.layers[l], c.mask, rope_, dx, g);
    embedding_.backward(c.ids, dx, g);
  }

  /// Pooled features for a batch, (n, embed_dim).
  Matrix<T> encode_batch(std::span<const tok::TokenSequence* const> seqs, std::size_t threads = 1) const {
    Matrix<T> feats(static_cast<Index>(seqs.size()), cfg_.embed_dim);
    parallel_chunks(seqs.size(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) feats.row(static_cast<Index>(i)) = encode(*seqs[i]);
    });
    return feats;
  }

  Matrix<T> head_input(const Matrix<T>& text, const Matrix<T>& extra) const {
    if (extra_dim_ == 0) {
      nn::require_shape(extra.size() == 0, "model was built text-only but got extra features");
      return text;
    }
    nn::require_shape(extra.rows() == text.rows() && extra.cols() == extra_dim_,
                      "extra feature shape mismatch: expected (" + std::to_string(text.rows()) +
                          "x" + std::to_string(extra_dim_) + ")");
    Matrix<T> x(text.rows(), text.cols() + extra.cols());
    x << text, extra;
    return x;
  }

  /// Eval-mode logits.
  Matrix<T> logits(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                   std::size_t threads = 1) const {
    Rng rng(0);
    return head_.forward(head_input(encode_batch(seqs, threads), extra), false, rng);
  }

  std::vector<int> predict(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                           std::size_t threads = 1) const {
    const Matrix<T> z = logits(seqs, extra, threads);
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = z(i, 1) > z(i, 0) ? 1 : 0;
    return out;
  }

  /// Train-mode forward + backward over one batch. Gradients are added to
  /// `g`; returns the loss. Per-sample work is split across `threads`
  /// workers whose gradients are summed in worker order.
  T loss_and_grad(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                  std::span<const int> labels, std::span<const double> class_weights,
                  std::uint64_t dropout_seed, nn::GradBuffer<T>& g, std::size_t threads = 1) {
    const std::size_t n = seqs.size();
    const bool keep = cache_bytes_estimate(seqs) <= kCacheBudgetBytes;
    std::vector<SampleCache> caches(keep ? n : 0);
    Matrix<T> feats(static_cast<Index>(n), cfg_.embed_dim);
    parallel_chunks(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        feats.row(static_cast<Index>(i)) = encode(*seqs[i], keep ? &caches[i] : nullptr);
    });

    Rng rng(dropout_seed);
    typename nn::MlpHead<T>::Cache hc;
    const Matrix<T> z = head_.forward(head_input(feats, extra), true, rng, &hc);
    auto loss = nn::weighted_cross_entropy<T>(z, labels, class_weights);
    const Matrix<T> dfeat = head_.backward(hc, loss.dlogits, g).leftCols(cfg_.embed_dim);

    std::vector<nn::GradBuffer<T>> worker_grads;
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
    for (std::size_t w = 0; w < workers; ++w) worker_grads.push_back(params_.make_grads());
    parallel_chunks(n, workers, [&](std::size_t w, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        SampleCache recomputed;
        if (!keep) encode(*seqs[i], &recomputed);
        const SampleCache& c = keep ? caches[i] : recomputed;
        encode_backward(c, dfeat.row(static_cast<Index>(i)), worker_grads[w]);
      }
    });
    for (const auto& wg : worker_grads) g += wg;
    return loss.loss;
  }

 private:
  static constexpr std::size_t kCacheBudgetBytes = std::size_t{1} << 30;

  std::size_t cache_bytes_estimate(std::span<const tok::TokenSequence* const> seqs) const {
    std::size_t rows = 0;
    for (const auto* s : seqs) rows += static_cast<std::size_t>(effective_length(*s));
    const std::size_t per_row = static_cast<std::size_t>(cfg_.layers) *
                                (4 * static_cast<std::size_t>(cfg_.embed_dim) +
                                 8 * static_cast<std::size_t>(cfg_.inner_dim()) +
                                 2 * static_cast<std::size_t>(cfg_.ff_dim()));
    return rows * per_row * sizeof(T);
  }

  EncoderConfig cfg_;
  Index extra_dim_ = 0;
  nn::ParameterSet<T> params_;
  nn::Embedding<T> embedding_;
  std::vector<EncoderLayer<T>> layers_;
  nn::LayerNorm<T> final_norm_;
  nn::MlpHead<T> head_;
  RopeTable<T> rope_;
  bool trim_ = true;
};

}  // namespace cvrm::hencoder
