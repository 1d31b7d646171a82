// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/random.hpp"
#include "cvrm/nn/mlp_head.hpp"
#include "cvrm/tokenizer/bpe.hpp"

namespace cvrm::baselines {

using Eigen::Index;
using nn::Matrix;

struct ResNetConfig {
  int embed_dim = 64;
  int layers = 8;
  int base_filters = 16;
  int kernel = 3;
  int head_hidden = 20;
  double head_dropout = 0.5;

  int pairs() const { return layers / 2; }
  /// Shortest input the pooling stages accept.
  Index min_length() const { return Index{2} << std::max(0, pairs() - 1); }

  void validate() const {
    if (embed_dim <= 0 || base_filters <= 0 || head_hidden <= 0)
      throw ConfigError("resnet dimensions must be positive");
    if (layers < 2 || layers % 2 != 0) throw ConfigError("resnet layers must be an even number >= 2");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("resnet kernel must be odd");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0))
      throw ConfigError("resnet head_dropout must be in [0, 1)");
  }
};

inline nlohmann::ordered_json to_json(const ResNetConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"layers", c.layers},           {"base_filters", c.base_filters},
          {"kernel", c.kernel},       {"head_hidden", c.head_hidden}, {"head_dropout", c.head_dropout}};
}

inline ResNetConfig resnet_config_from_json(const nlohmann::json& j, ResNetConfig c = {}) {
  if (!j.is_object()) throw ConfigError("resnet config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "embed_dim") c.embed_dim = val.get<int>();
      else if (key == "layers") c.layers = val.get<int>();
      else if (key == "base_filters") c.base_filters = val.get<int>();
      else if (key == "kernel") c.kernel = val.get<int>();
      else if (key == "head_hidden") c.head_hidden = val.get<int>();
      else if (key == "head_dropout") c.head_dropout = val.get<double>();
      else throw ConfigError("unknown resnet config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("resnet config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

/// Same-padded 1-D convolution over a batch stored as (batch*len, channels),
/// computed as im2col followed by one matrix product.
template <typename T>
struct Conv1d {
  nn::Parameter<T>* weight = nullptr;  // (out, kernel*in), tap-major
  nn::Parameter<T>* bias = nullptr;
  Index in = 0, out = 0, kernel = 1;

  Conv1d() = default;
  Conv1d(nn::ParameterSet<T>& ps, const std::string& name, Index in_ch, Index out_ch, Index k, Rng& rng)
      : in(in_ch), out(out_ch), kernel(k) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in_ch * k)));
    weight = &ps.add(name + ".weight", nn::uniform_init<T>(out_ch, in_ch * k, bound, rng));
    bias = &ps.add(name + ".bias", nn::uniform_init<T>(1, out_ch, bound, rng));
  }

  Matrix<T> im2col(const Matrix<T>& x, Index len) const {
    const Index batch = x.rows() / len, pad = kernel / 2;
    Matrix<T> col = Matrix<T>::Zero(x.rows(), kernel * in);
    for (Index b = 0; b < batch; ++b)
      for (Index t = 0; t < len; ++t)
        for (Index j = 0; j < kernel; ++j) {
          const Index src = t + j - pad;
          if (src >= 0 && src < len) col.block(b * len + t, j * in, 1, in) = x.row(b * len + src);
        }
    return col;
  }

  Matrix<T> forward(const Matrix<T>& x, Index len, Matrix<T>* col_cache) const {
    nn::require_shape(x.cols() == in && x.rows() % len == 0, "conv1d: input shape mismatch");
    Matrix<T> col = im2col(x, len);
    Matrix<T> y = col * weight->value.transpose();
    y.rowwise() += bias->value.row(0);
    if (col_cache) *col_cache = std::move(col);
    return y;
  }

  Matrix<T> backward(const Matrix<T>& col, Index len, const Matrix<T>& dy, nn::GradBuffer<T>& g) const {
    g[weight->slot].noalias() += dy.transpose() * col;
    g[bias->slot] += dy.colwise().sum();
    const Matrix<T> dcol = dy * weight->value;
    const Index batch = dy.rows() / len, pad = kernel / 2;
    Matrix<T> dx = Matrix<T>::Zero(dy.rows(), in);
    for (Index b = 0; b < batch; ++b)
      for (Index t = 0; t < len; ++t)
        for (Index j = 0; j < kernel; ++j) {
          const Index src = t + j - pad;
          if (src >= 0 && src < len) dx.row(b * len + src) += dcol.block(b * len + t, j * in, 1, in);
        }
    return dx;
  }
};

/// 1-D convolutional residual network over learned token embeddings.
///
/// embed -> P pairs of [conv -> BN -> ReLU] x 2 with a 1x1 projection skip
/// added after each pair, channels base * 2^p, stride-2 max pooling between
/// pairs -> global max pool -> head (linear -> BN -> ReLU -> dropout ->
/// linear).
template <typename T>
class ResNet1D {
 public:
  struct PairCache {
    Index len = 0;
    Matrix<T> input;
    Matrix<T> col1, z1, col2, z2, proj_col;
    nn::BatchNormCache<T> bn1, bn2;
    Matrix<T> out;                     // after the residual add
    std::vector<Index> pool_argmax;    // rows of `out` picked by max pooling
  };

  struct Cache {
    std::vector<std::vector<std::int32_t>> ids;
    std::vector<PairCache> pairs;
    std::vector<Index> global_argmax;  // (batch * channels)
    Matrix<T> pooled;
    typename nn::MlpHead<T>::Cache head;
  };

  ResNet1D(const ResNetConfig& cfg, Index vocab_size, Index extra_dim, std::uint64_t seed)
      : cfg_(cfg), extra_dim_(extra_dim) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "resnet.init"));
    embedding_ = nn::Embedding<T>(params_, "embedding", vocab_size, cfg_.embed_dim, rng, tok::kPad);
    Index ch = cfg_.embed_dim;
    for (int p = 0; p < cfg_.pairs(); ++p) {
      const Index out = static_cast<Index>(cfg_.base_filters) << p;
      const std::string n = "pair" + std::to_string(p);
      Pair pr;
      pr.conv1 = Conv1d<T>(params_, n + ".conv1", ch, out, cfg_.kernel, rng);
      pr.bn1 = nn::BatchNorm1d<T>(params_, n + ".bn1", out);
      pr.conv2 = Conv1d<T>(params_, n + ".conv2", out, out, cfg_.kernel, rng);
      pr.bn2 = nn::BatchNorm1d<T>(params_, n + ".bn2", out);
      if (ch != out) pr.proj = Conv1d<T>(params_, n + ".proj", ch, out, 1, rng);
      pairs_.push_back(std::move(pr));
      ch = out;
    }
    channels_ = ch;
    nn::MlpHeadConfig hc;
    hc.in = ch + extra_dim_;
    hc.hidden = {cfg_.head_hidden};
    hc.dropout = cfg_.head_dropout;
    hc.activation = nn::Activation::relu;
    head_ = nn::MlpHead<T>(params_, "head", hc, rng);
  }

  ResNet1D(const ResNet1D&) = delete;
  ResNet1D& operator=(const ResNet1D&) = delete;

  const ResNetConfig& config() const { return cfg_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  Index extra_dim() const { return extra_dim_; }
  Index feature_dim() const { return channels_; }

  /// Pooled convolutional features (batch, channels). `trace`, if given,
  /// receives the output of every residual pair.
  Matrix<T> features(std::span<const tok::TokenSequence* const> seqs, bool train, Cache* cache,
                     std::vector<Matrix<T>>* trace = nullptr) const {
    if (seqs.empty()) throw ShapeError("resnet: empty batch");
    const auto len0 = static_cast<Index>(seqs[0]->length());
    if (len0 < cfg_.min_length())
      throw ShapeError("resnet: sequence length " + std::to_string(len0) + " below minimum " +
                       std::to_string(cfg_.min_length()));
    const auto batch = static_cast<Index>(seqs.size());
    Matrix<T> x(batch * len0, cfg_.embed_dim);
    if (cache) cache->ids.clear();
    for (Index b = 0; b < batch; ++b) {
      const auto& s = *seqs[static_cast<std::size_t>(b)];
      if (static_cast<Index>(s.length()) != len0) throw ShapeError("resnet: ragged batch");
      x.middleRows(b * len0, len0) = embedding_.forward(s.ids);
      if (cache) cache->ids.push_back(s.ids);
    }
    if (cache) cache->pairs.assign(pairs_.size(), {});
    Index len = len0;
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      PairCache local;
      PairCache& c = cache ? cache->pairs[p] : local;
      x = pair_forward(pairs_[p], x, len, train, c);
      if (trace) trace->push_back(x);
      if (p + 1 < pairs_.size()) {
        x = max_pool2(x, c.pool_argmax);
        len /= 2;
      }
    }
    std::vector<Index> arg;
    Matrix<T> pooled = global_max(x, len, arg);
    if (cache) {
      cache->global_argmax = std::move(arg);
      cache->pooled = pooled;
    }
    return pooled;
  }

  Matrix<T> head_input(const Matrix<T>& feats, const Matrix<T>& extra) const {
    if (extra_dim_ == 0) {
      nn::require_shape(extra.size() == 0, "model was built text-only but got extra features");
      return feats;
    }
    nn::require_shape(extra.rows() == feats.rows() && extra.cols() == extra_dim_,
                      "extra feature shape mismatch");
    Matrix<T> x(feats.rows(), feats.cols() + extra.cols());
    x << feats, extra;
    return x;
  }

  Matrix<T> logits(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                   std::size_t /*threads*/ = 1) const {
    Rng rng(0);
    return head_.forward(head_input(features(seqs, false, nullptr), extra), false, rng);
  }

  std::vector<int> predict(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                           std::size_t /*threads*/ = 1) const {
    const Matrix<T> z = logits(seqs, extra);
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = z(i, 1) > z(i, 0) ? 1 : 0;
    return out;
  }

  T loss_and_grad(std::span<const tok::TokenSequence* const> seqs, const Matrix<T>& extra,
                  std::span<const int> labels, std::span<const double> class_weights,
                  std::uint64_t dropout_seed, nn::GradBuffer<T>& g, std::size_t /*threads*/ = 1) {
    Cache c;
    const Matrix<T> feats = features(seqs, true, &c);
    Rng rng(dropout_seed);
    const Matrix<T> z = head_.forward(head_input(feats, extra), true, rng, &c.head);
    auto loss = nn::weighted_cross_entropy<T>(z, labels, class_weights);
    const Matrix<T> dfeat = head_.backward(c.head, loss.dlogits, g).leftCols(channels_);
    backward(c, static_cast<Index>(seqs[0]->length()), dfeat, g);
    return loss.loss;
  }

 private:
  struct Pair {
    Conv1d<T> conv1, conv2, proj;
    nn::BatchNorm1d<T> bn1, bn2;
  };

  Matrix<T> pair_forward(const Pair& pr, const Matrix<T>& x, Index len, bool train, PairCache& c) const {
    c.len = len;
    c.input = x;
    c.z1 = pr.bn1.forward(pr.conv1.forward(x, len, &c.col1), train, &c.bn1);
    const Matrix<T> a1 = nn::relu(c.z1);
    c.z2 = pr.bn2.forward(pr.conv2.forward(a1, len, &c.col2), train, &c.bn2);
    Matrix<T> out = nn::relu(c.z2);
    out += pr.proj.weight ? pr.proj.forward(x, len, &c.proj_col) : x;
    c.out = out;
    return out;
  }

  Matrix<T> pair_backward(const Pair& pr, const PairCache& c, const Matrix<T>& dout,
                          nn::GradBuffer<T>& g) const {
    Matrix<T> dx = pr.proj.weight ? pr.proj.backward(c.proj_col, c.len, dout, g) : dout;
    Matrix<T> d = nn::relu_backward(c.z2, dout);
    d = pr.bn2.backward(c.bn2, d, g);
    d = pr.conv2.backward(c.col2, c.len, d, g);
    d = nn::relu_backward(c.z1, d);
    d = pr.bn1.backward(c.bn1, d, g);
    dx += pr.conv1.backward(c.col1, c.len, d, g);
    return dx;
  }

  static Matrix<T> max_pool2(const Matrix<T>& x, std::vector<Index>& argmax) {
    const Index rows = x.rows() / 2, ch = x.cols();
    Matrix<T> y(rows, ch);
    argmax.assign(static_cast<std::size_t>(rows * ch), 0);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < ch; ++c) {
        const Index a = 2 * r, b = 2 * r + 1;
        const Index pick = x(b, c) > x(a, c) ? b : a;
        y(r, c) = x(pick, c);
        argmax[static_cast<std::size_t>(r * ch + c)] = pick;
      }
    return y;
  }

  static Matrix<T> global_max(const Matrix<T>& x, Index len, std::vector<Index>& argmax) {
    const Index batch = x.rows() / len, ch = x.cols();
    Matrix<T> y(batch, ch);
    argmax.assign(static_cast<std::size_t>(batch * ch), 0);
    for (Index b = 0; b < batch; ++b)
      for (Index c = 0; c < ch; ++c) {
        Index best = b * len;
        for (Index t = 1; t < len; ++t)
          if (x(b * len + t, c) > x(best, c)) best = b * len + t;
        y(b, c) = x(best, c);
        argmax[static_cast<std::size_t>(b * ch + c)] = best;
      }
    return y;
  }

  void backward(const Cache& c, Index len0, const Matrix<T>& dpooled, nn::GradBuffer<T>& g) const {
    const Index batch = dpooled.rows(), ch = dpooled.cols();
    const auto& last = c.pairs.back();
    Matrix<T> d = Matrix<T>::Zero(last.out.rows(), ch);
    for (Index b = 0; b < batch; ++b)
      for (Index k = 0; k < ch; ++k) d(c.global_argmax[static_cast<std::size_t>(b * ch + k)], k) += dpooled(b, k);
    for (std::size_t p = pairs_.size(); p-- > 0;) {
      const auto& pc = c.pairs[p];
      if (p + 1 < pairs_.size()) {
        Matrix<T> up = Matrix<T>::Zero(pc.out.rows(), pc.out.cols());
        const Index cols = pc.out.cols();
        for (Index r = 0; r < d.rows(); ++r)
          for (Index k = 0; k < cols; ++k) up(pc.pool_argmax[static_cast<std::size_t>(r * cols + k)], k) += d(r, k);
        d = std::move(up);
      }
      d = pair_backward(pairs_[p], pc, d, g);
    }
    for (Index b = 0; b < batch; ++b)
      embedding_.backward(c.ids[static_cast<std::size_t>(b)], d.middleRows(b * len0, len0), g);
  }

  ResNetConfig cfg_;
  Index extra_dim_ = 0;
  Index channels_ = 0;
  nn::ParameterSet<T> params_;
  nn::Embedding<T> embedding_;
  std::vector<Pair> pairs_;
  nn::MlpHead<T> head_;
};

}  // namespace cvrm::baselines
