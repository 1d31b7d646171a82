// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cvrm/hencoder/attention.hpp"
#include "cvrm/hencoder/config.hpp"
#include "cvrm/hencoder/rope.hpp"
#include "cvrm/nn/layers.hpp"

namespace cvrm::hencoder {

template <typename T>
struct LayerCache {
  Matrix<T> h1;  // LN1(x)
  nn::LayerNormCache<T> ln1;
  Matrix<T> q, k, v;  // after rotary embedding
  AttentionCache<T> attn;
  Matrix<T> attn_out;
  nn::LayerNormCache<T> ln2;
  Matrix<T> h2;  // LN2(x_mid)
  Matrix<T> f1;  // pre-GELU
  Matrix<T> g1;  // post-GELU
};

/// Pre-norm Transformer block with hierarchical self-attention:
///   x += Wo . attn(rope(Wq LN(x)), rope(Wk LN(x)), Wv LN(x))
///   x += W2 . gelu(W1 LN(x))
template <typename T>
struct EncoderLayer {
  nn::LayerNorm<T> ln1, ln2;
  nn::Linear<T> wq, wk, wv, wo, ff1, ff2;
  Index heads = 1;
  Index block = 32;

  EncoderLayer() = default;
  EncoderLayer(nn::ParameterSet<T>& ps, const std::string& name, const EncoderConfig& c, Rng& rng)
      : ln1(ps, name + ".ln1", c.embed_dim),
        ln2(ps, name + ".ln2", c.embed_dim),
        wq(ps, name + ".wq", c.embed_dim, c.inner_dim(), rng),
        wk(ps, name + ".wk", c.embed_dim, c.inner_dim(), rng),
        wv(ps, name + ".wv", c.embed_dim, c.inner_dim(), rng),
        wo(ps, name + ".wo", c.inner_dim(), c.embed_dim, rng),
        ff1(ps, name + ".ff1", c.embed_dim, c.ff_dim(), rng),
        ff2(ps, name + ".ff2", c.ff_dim(), c.embed_dim, rng),
        heads(c.heads),
        block(c.block_size) {}

  Matrix<T> forward(const Matrix<T>& x, std::span<const std::uint8_t> mask,
                    const RopeTable<T>& rope, LayerCache<T>* cache = nullptr) const {
    nn::require_shape(x.cols() == ln1.gain->value.cols(), "encoder_layer: width mismatch");
    LayerCache<T> local;
    LayerCache<T>& c = cache ? *cache : local;
    c.h1 = ln1.forward(x, &c.ln1);
    c.q = rope.apply(wq.forward(c.h1));
    c.k = rope.apply(wk.forward(c.h1));
    c.v = wv.forward(c.h1);
    c.attn_out = hierarchical_attention<T>(c.q, c.k, c.v, mask, heads, block, cache ? &c.attn : nullptr);
    Matrix<T> x_mid = x + wo.forward(c.attn_out);
    c.h2 = ln2.forward(x_mid, &c.ln2);
    c.f1 = ff1.forward(c.h2);
    c.g1 = nn::gelu(c.f1);
    x_mid += ff2.forward(c.g1);
    return x_mid;
  }

  Matrix<T> backward(const LayerCache<T>& c, std::span<const std::uint8_t> mask,
                     const RopeTable<T>& rope, const Matrix<T>& dy, nn::GradBuffer<T>& g) const {
    Matrix<T> dx = dy;
    const Matrix<T> dg1 = ff2.backward(c.g1, dy, g);
    const Matrix<T> df1 = nn::gelu_backward(c.f1, dg1);
    dx += ln2.backward(c.ln2, ff1.backward(c.h2, df1, g), g);
    const Matrix<T> da = wo.backward(c.attn_out, dx, g);
    const auto ag = hierarchical_attention_backward<T>(c.q, mask, heads, block, c.attn, da);
    Matrix<T> dh1 = wq.backward(c.h1, rope.apply(ag.dq, true), g);
    dh1 += wk.backward(c.h1, rope.apply(ag.dk, true), g);
    dh1 += wv.backward(c.h1, ag.dv, g);
    dx += ln1.backward(c.ln1, dh1, g);
    return dx;
  }
};

/// CLS pooling takes row 0; average pooling takes the mean of unmasked rows.
template <typename T>
Matrix<T> pool(const Matrix<T>& x, std::span<const std::uint8_t> mask, Pooling mode) {
  nn::require_shape(static_cast<Index>(mask.size()) == x.rows(), "pool: mask length mismatch");
  Index n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  if (n == 0) throw ShapeError("pool: all-zero mask");
  if (mode == Pooling::cls) {
    if (!mask[0]) throw ShapeError("pool: cls mode needs a real token at position 0");
    return x.topRows(1);
  }
  Matrix<T> out = Matrix<T>::Zero(1, x.cols());
  for (Index r = 0; r < x.rows(); ++r)
    if (mask[static_cast<std::size_t>(r)]) out += x.row(r);
  return out / static_cast<T>(n);
}

template <typename T>
Matrix<T> pool_backward(const Matrix<T>& dpooled, std::span<const std::uint8_t> mask, Pooling mode,
                        Index rows) {
  Matrix<T> dx = Matrix<T>::Zero(rows, dpooled.cols());
  if (mode == Pooling::cls) {
    dx.row(0) = dpooled.row(0);
    return dx;
  }
  Index n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  for (Index r = 0; r < rows; ++r)
    if (mask[static_cast<std::size_t>(r)]) dx.row(r) = dpooled.row(0) / static_cast<T>(n);
  return dx;
}

}  // namespace cvrm::hencoder
