// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cvrm/nn/tensor.hpp"

namespace cvrm::hencoder {

using Eigen::Index;
using nn::Matrix;

// Hierarchical attention over a power-of-two sequence split into blocks of
// `block` tokens.
//
// Level 0 holds the raw keys/values. Level l holds coarse tokens, each the
// mask-weighted mean of two level l-1 tokens, so one level-l token stands for
// 2^l raw positions and carries the count c of real positions below it. Its
// score is q.k/sqrt(d) + log(c), which gives it the softmax mass of c keys
// and gives empty (all-pad) tokens zero weight.
//
// Queries stay at full resolution. A query in level-0 block i sees raw key
// blocks {i-1, i, i+1}. At level l >= 1 it sees the level-l blocks
// {p-1, p, p+1} around its ancestor p = i >> l, minus the span already
// covered at level l-1. Every real key is therefore attended exactly once,
// either raw or inside one coarse token, and all segments feed one streaming
// softmax.

/// Contiguous run of queries attending a contiguous run of level-`level`
/// tokens (token indices in that level's units).
struct Segment {
  int level = 0;
  Index row0 = 0, row1 = 0;
  Index key0 = 0, key1 = 0;
};

inline void check_attention_shape(Index len, Index block) {
  if (block < 2 || !std::has_single_bit(static_cast<std::uint64_t>(block)))
    throw ShapeError("block_size must be a power of two >= 2, got " + std::to_string(block));
  if (len < block)
    throw ShapeError("sequence length " + std::to_string(len) + " shorter than block_size " +
                     std::to_string(block));
  if (!std::has_single_bit(static_cast<std::uint64_t>(len)))
    throw ShapeError("sequence length " + std::to_string(len) + " is not a power of two");
}

/// Number of levels (including level 0) needed to cover every key.
inline int attention_levels(Index len, Index block) {
  check_attention_shape(len, block);
  const Index nb0 = len / block;
  int n = 1;
  while ((nb0 >> (n - 1)) > 2) ++n;
  return n;
}

inline std::vector<Segment> attention_segments(Index len, Index block) {
  const int levels = attention_levels(len, block);
  const Index nb0 = len / block;
  std::vector<Segment> segs;
  for (Index i = 0; i < nb0; ++i)
    segs.push_back({0, i * block, (i + 1) * block, std::max<Index>(0, (i - 1) * block),
                    std::min(len, (i + 2) * block)});
  for (int l = 1; l < levels; ++l) {
    const Index span = block << l, prev_span = block << (l - 1), unit = Index{1} << l;
    for (Index qp = 0; qp < (nb0 >> (l - 1)); ++qp) {
      const Index p = qp >> 1;
      const Index outer_lo = std::max<Index>(0, (p - 1) * span);
      const Index outer_hi = std::min(len, (p + 2) * span);
      const Index inner_lo = std::max<Index>(0, (qp - 1) * prev_span);
      const Index inner_hi = std::min(len, (qp + 2) * prev_span);
      const Index r0 = qp * prev_span, r1 = (qp + 1) * prev_span;
      if (outer_lo < inner_lo) segs.push_back({l, r0, r1, outer_lo / unit, inner_lo / unit});
      if (inner_hi < outer_hi) segs.push_back({l, r0, r1, inner_hi / unit, outer_hi / unit});
    }
  }
  return segs;
}

/// attention_segments split into level-0 query blocks and ordered by block,
/// then level.
inline std::vector<Segment> blocked_segments(Index len, Index block) {
  std::vector<std::vector<Segment>> by_block(static_cast<std::size_t>(len / block));
  for (const auto& s : attention_segments(len, block))
    for (Index r = s.row0; r < s.row1; r += block) {
      Segment t = s;
      t.row0 = r;
      t.row1 = r + block;
      by_block[static_cast<std::size_t>(r / block)].push_back(t);
    }
  std::vector<Segment> out;
  for (const auto& b : by_block) out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Per-head state kept between forward and backward.
template <typename T>
struct HeadState {
  std::vector<Matrix<T>> k, v;              // level 0 = raw
  std::vector<std::vector<T>> count;        // real positions under each token
  std::vector<std::vector<T>> bias;         // log(count), -inf when empty
  Matrix<T> out;
  std::vector<T> lse;                       // +inf for pad queries
};

template <typename T>
struct AttentionCache {
  std::vector<HeadState<T>> heads;
};

namespace detail {

template <typename T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

template <typename T>
void build_levels(const Matrix<T>& k, const Matrix<T>& v, std::span<const std::uint8_t> mask,
                  int levels, HeadState<T>& st) {
  st.k.assign(1, k);
  st.v.assign(1, v);
  st.count.assign(1, std::vector<T>(mask.size()));
  for (std::size_t i = 0; i < mask.size(); ++i) st.count[0][i] = mask[i] ? T(1) : T(0);
  for (int l = 1; l < levels; ++l) {
    const auto& pk = st.k[static_cast<std::size_t>(l - 1)];
    const auto& pv = st.v[static_cast<std::size_t>(l - 1)];
    const auto& pc = st.count[static_cast<std::size_t>(l - 1)];
    const Index n = pk.rows() / 2;
    Matrix<T> ck = Matrix<T>::Zero(n, pk.cols()), cv = Matrix<T>::Zero(n, pv.cols());
    std::vector<T> cc(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      const T c0 = pc[static_cast<std::size_t>(2 * j)], c1 = pc[static_cast<std::size_t>(2 * j + 1)];
      const T c = c0 + c1;
      cc[static_cast<std::size_t>(j)] = c;
      if (c > T(0)) {
        ck.row(j) = (c0 * pk.row(2 * j) + c1 * pk.row(2 * j + 1)) / c;
        cv.row(j) = (c0 * pv.row(2 * j) + c1 * pv.row(2 * j + 1)) / c;
      }
    }
    st.k.push_back(std::move(ck));
    st.v.push_back(std::move(cv));
    st.count.push_back(std::move(cc));
  }
  st.bias.clear();
  for (const auto& cs : st.count) {
    std::vector<T> b(cs.size());
    for (std::size_t j = 0; j < cs.size(); ++j) b[j] = cs[j] > T(0) ? std::log(cs[j]) : neg_inf<T>();
    st.bias.push_back(std::move(b));
  }
}

template <typename T>
Matrix<T> segment_scores(const Matrix<T>& q, const HeadState<T>& st, const Segment& s, T scale) {
  const auto& kl = st.k[static_cast<std::size_t>(s.level)];
  Matrix<T> scores(s.row1 - s.row0, s.key1 - s.key0);
  scores.noalias() = (q.middleRows(s.row0, s.row1 - s.row0) *
                      kl.middleRows(s.key0, s.key1 - s.key0).transpose()) * scale;
  const auto& b = st.bias[static_cast<std::size_t>(s.level)];
  const Eigen::Map<const nn::RowVector<T>> bias(b.data() + s.key0, s.key1 - s.key0);
  scores.rowwise() += bias;
  return scores;
}

/// Single-head forward. Fills st.out and st.lse.
template <typename T>
void head_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                  std::span<const std::uint8_t> mask, Index block, HeadState<T>& st) {
  const Index len = q.rows(), dh = q.cols();
  const int levels = attention_levels(len, block);
  build_levels(k, v, mask, levels, st);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> m(static_cast<std::size_t>(len), neg_inf<T>()), l(static_cast<std::size_t>(len), T(0));
  Matrix<T> acc = Matrix<T>::Zero(len, v.cols());
  for (const auto& s : blocked_segments(len, block)) {
    const Matrix<T> scores = segment_scores(q, st, s, scale);
    Matrix<T> p = Matrix<T>::Zero(scores.rows(), scores.cols());
    bool any = false;
    for (Index r = 0; r < scores.rows(); ++r) {
      const T smax = scores.row(r).maxCoeff();
      if (smax == neg_inf<T>()) continue;
      const auto row = static_cast<std::size_t>(s.row0 + r);
      const T mnew = std::max(m[row], smax);
      const T alpha = m[row] == neg_inf<T>() ? T(0) : std::exp(m[row] - mnew);
      p.row(r) = (scores.row(r).array() - mnew).exp();
      l[row] = l[row] * alpha + p.row(r).sum();
      acc.row(s.row0 + r) *= alpha;
      m[row] = mnew;
      any = true;
    }
    if (any)
      acc.middleRows(s.row0, scores.rows()).noalias() +=
          p * st.v[static_cast<std::size_t>(s.level)].middleRows(s.key0, s.key1 - s.key0);
  }
  st.out = Matrix<T>::Zero(len, v.cols());
  st.lse.assign(static_cast<std::size_t>(len), std::numeric_limits<T>::infinity());
  for (Index r = 0; r < len; ++r) {
    const auto row = static_cast<std::size_t>(r);
    if (!mask[row] || l[row] <= T(0)) continue;
    st.out.row(r) = acc.row(r) / l[row];
    st.lse[row] = m[row] + std::log(l[row]);
  }
}

/// Single-head backward. Returns dq; writes dk, dv.
template <typename T>
Matrix<T> head_backward(const Matrix<T>& q, const HeadState<T>& st,
                        std::span<const std::uint8_t> mask, Index block, Matrix<T> dout,
                        Matrix<T>& dk, Matrix<T>& dv) {
  const Index len = q.rows(), dh = q.cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (Index r = 0; r < len; ++r)
    if (!mask[static_cast<std::size_t>(r)]) dout.row(r).setZero();
  const Matrix<T> delta = (dout.array() * st.out.array()).rowwise().sum().matrix();
  Matrix<T> dq = Matrix<T>::Zero(len, dh);
  std::vector<Matrix<T>> dkl, dvl;
  for (const auto& kl : st.k) dkl.push_back(Matrix<T>::Zero(kl.rows(), kl.cols()));
  for (const auto& vl : st.v) dvl.push_back(Matrix<T>::Zero(vl.rows(), vl.cols()));

  for (const auto& s : blocked_segments(len, block)) {
    const auto lv = static_cast<std::size_t>(s.level);
    const Index nr = s.row1 - s.row0, nk = s.key1 - s.key0;
    Matrix<T> p = segment_scores(q, st, s, scale);
    for (Index r = 0; r < nr; ++r) {
      const T lse = st.lse[static_cast<std::size_t>(s.row0 + r)];
      if (lse == std::numeric_limits<T>::infinity())
        p.row(r).setZero();
      else
        p.row(r) = (p.row(r).array() - lse).exp();
    }
    const auto dout_rows = dout.middleRows(s.row0, nr);
    const auto vseg = st.v[lv].middleRows(s.key0, nk);
    Matrix<T> ds = dout_rows * vseg.transpose();
    ds.colwise() -= delta.middleRows(s.row0, nr).col(0);
    ds = ds.cwiseProduct(p) * scale;
    dq.middleRows(s.row0, nr).noalias() += ds * st.k[lv].middleRows(s.key0, nk);
    dkl[lv].middleRows(s.key0, nk).noalias() += ds.transpose() * q.middleRows(s.row0, nr);
    dvl[lv].middleRows(s.key0, nk).noalias() += p.transpose() * dout_rows;
  }
  for (std::size_t l = st.k.size(); l-- > 1;) {
    const auto& cc = st.count[l];
    const auto& pc = st.count[l - 1];
    for (Index j = 0; j < dkl[l].rows(); ++j) {
      const T c = cc[static_cast<std::size_t>(j)];
      if (c <= T(0)) continue;
      for (Index child = 2 * j; child <= 2 * j + 1; ++child) {
        const T w = pc[static_cast<std::size_t>(child)] / c;
        if (w == T(0)) continue;
        dkl[l - 1].row(child) += w * dkl[l].row(j);
        dvl[l - 1].row(child) += w * dvl[l].row(j);
      }
    }
  }
  dk = std::move(dkl[0]);
  dv = std::move(dvl[0]);
  return dq;
}

}  // namespace detail

/// Multi-head hierarchical attention. q, k, v are (len, heads*dim_head) with
/// head h in columns [h*dim_head, (h+1)*dim_head). Pad queries output zeros.
template <typename T>
Matrix<T> hierarchical_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                 std::span<const std::uint8_t> mask, Index heads, Index block,
                                 AttentionCache<T>* cache = nullptr) {
  const Index len = q.rows();
  check_attention_shape(len, block);
  nn::require_shape(k.rows() == len && v.rows() == len && k.cols() == q.cols() &&
                        v.cols() == q.cols() && static_cast<Index>(mask.size()) == len,
                    "hierarchical_attention: q/k/v/mask shapes disagree");
  nn::require_shape(heads > 0 && q.cols() % heads == 0, "hierarchical_attention: bad head count");
  const Index dh = q.cols() / heads;
  Matrix<T> out(len, q.cols());
  AttentionCache<T> local;
  AttentionCache<T>& c = cache ? *cache : local;
  c.heads.assign(static_cast<std::size_t>(heads), {});
  for (Index h = 0; h < heads; ++h) {
    auto& st = c.heads[static_cast<std::size_t>(h)];
    detail::head_forward<T>(q.middleCols(h * dh, dh), k.middleCols(h * dh, dh),
                            v.middleCols(h * dh, dh), mask, block, st);
    out.middleCols(h * dh, dh) = st.out;
    if (!cache) st = {};
  }
  return out;
}

template <typename T>
struct AttentionGrads {
  Matrix<T> dq, dk, dv;
};

template <typename T>
AttentionGrads<T> hierarchical_attention_backward(const Matrix<T>& q,
                                                  std::span<const std::uint8_t> mask, Index heads,
                                                  Index block, const AttentionCache<T>& cache,
                                                  const Matrix<T>& dout) {
  const Index len = q.rows(), dh = q.cols() / heads;
  AttentionGrads<T> g{Matrix<T>(len, q.cols()), Matrix<T>(len, q.cols()), Matrix<T>(len, q.cols())};
  for (Index h = 0; h < heads; ++h) {
    Matrix<T> dk, dv;
    g.dq.middleCols(h * dh, dh) = detail::head_backward<T>(
        q.middleCols(h * dh, dh), cache.heads[static_cast<std::size_t>(h)], mask, block,
        dout.middleCols(h * dh, dh), dk, dv);
    g.dk.middleCols(h * dh, dh) = dk;
    g.dv.middleCols(h * dh, dh) = dv;
  }
  return g;
}

/// One attended item of a query: a raw key (level 0) or a coarse token.
struct AttendedItem {
  int level = 0;
  Index index = 0;
  double weight = 0.0;
};

/// Reconstructs the normalized attention weights of every query of a single
/// head from the stored log-sum-exp. Intended for tests and diagnostics.
template <typename T>
std::vector<std::vector<AttendedItem>> attention_weights(const Matrix<T>& q, const Matrix<T>& k,
                                                         const Matrix<T>& v,
                                                         std::span<const std::uint8_t> mask,
                                                         Index block) {
  HeadState<T> st;
  detail::head_forward<T>(q, k, v, mask, block, st);
  const T scale = T(1) / std::sqrt(static_cast<T>(q.cols()));
  std::vector<std::vector<AttendedItem>> out(static_cast<std::size_t>(q.rows()));
  for (const auto& s : attention_segments(q.rows(), block)) {
    const Matrix<T> scores = detail::segment_scores(q, st, s, scale);
    for (Index r = 0; r < scores.rows(); ++r) {
      const auto row = static_cast<std::size_t>(s.row0 + r);
      if (st.lse[row] == std::numeric_limits<T>::infinity()) continue;
      for (Index c = 0; c < scores.cols(); ++c)
        out[row].push_back({s.level, s.key0 + c,
                            static_cast<double>(std::exp(scores(r, c) - st.lse[row]))});
    }
  }
  return out;
}

/// Dense softmax attention with the same masking conventions; the reference
/// oracle. Rows are processed in chunks to bound memory.
template <typename T>
Matrix<T> dense_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                          std::span<const std::uint8_t> mask, Index heads) {
  const Index len = q.rows(), dh = q.cols() / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Matrix<T> out = Matrix<T>::Zero(len, q.cols());
  constexpr Index chunk = 256;
  nn::RowVector<T> bias(len);
  for (Index j = 0; j < len; ++j) bias(j) = mask[static_cast<std::size_t>(j)] ? T(0) : detail::neg_inf<T>();
  for (Index h = 0; h < heads; ++h) {
    const Matrix<T> kh = k.middleCols(h * dh, dh), vh = v.middleCols(h * dh, dh);
    for (Index r0 = 0; r0 < len; r0 += chunk) {
      const Index nr = std::min(chunk, len - r0);
      Matrix<T> s = (q.block(r0, h * dh, nr, dh) * kh.transpose()) * scale;
      s.rowwise() += bias;
      for (Index r = 0; r < nr; ++r) {
        if (!mask[static_cast<std::size_t>(r0 + r)]) {
          s.row(r).setZero();
          continue;
        }
        const T mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(r0, h * dh, nr, dh).noalias() = s * vh;
    }
  }
  return out;
}

}  // namespace cvrm::hencoder
