// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cvrm/common/random.hpp"
#include "cvrm/nn/tensor.hpp"

namespace cvrm::nn {

/// y = x W^T + b for x of shape (n, in) and W of shape (out, in).
template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& weight, const RowVector<T>& bias) {
  require_shape(x.cols() == weight.cols(), "linear: input width " + std::to_string(x.cols()) +
                                               " vs weight " + shape_str(weight));
  require_shape(bias.size() == weight.rows(), "linear: bias size mismatch");
  Matrix<T> y = x * weight.transpose();
  y.rowwise() += bias;
  return y;
}

template <typename T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, T bound, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<T>(rng.uniform(-static_cast<double>(bound), static_cast<double>(bound)));
  return m;
}

template <typename T>
Matrix<T> normal_init(Eigen::Index rows, Eigen::Index cols, T stddev, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<T>(rng.normal(0.0, static_cast<double>(stddev)));
  return m;
}

template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;  // (out, in)
  Parameter<T>* bias = nullptr;    // (1, out)

  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
    weight = &ps.add(name + ".weight", uniform_init<T>(out, in, bound, rng));
    bias = &ps.add(name + ".bias", uniform_init<T>(1, out, bound, rng));
  }

  Eigen::Index in_features() const { return weight->value.cols(); }
  Eigen::Index out_features() const { return weight->value.rows(); }

  Matrix<T> forward(const Matrix<T>& x) const {
    return linear<T>(x, weight->value, bias->value.row(0));
  }

  /// Accumulates dW, db and returns dx.
  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy, GradBuffer<T>& g) const {
    g[weight->slot].noalias() += dy.transpose() * x;
    g[bias->slot] += dy.colwise().sum();
    return dy * weight->value;
  }
};

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  Matrix<T> rstd;  // (n, 1)
};

/// Row-wise layer normalization with learned gain and shift.
template <typename T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* shift = nullptr;
  T eps = static_cast<T>(1e-5);

  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& ps, const std::string& name, Eigen::Index dim) {
    gain = &ps.add(name + ".gain", Matrix<T>::Ones(1, dim));
    shift = &ps.add(name + ".shift", Matrix<T>::Zero(1, dim));
  }

  Matrix<T> forward(const Matrix<T>& x, LayerNormCache<T>* cache = nullptr) const {
    require_shape(x.cols() == gain->value.cols(), "layer_norm: width mismatch");
    const auto d = static_cast<T>(x.cols());
    Matrix<T> xhat(x.rows(), x.cols());
    Matrix<T> rstd(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).sum() / d;
      const T var = (x.row(r).array() - mean).square().sum() / d;
      rstd(r, 0) = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mean) * rstd(r, 0);
    }
    Matrix<T> y = (xhat.array().rowwise() * gain->value.row(0).array()).matrix();
    y.rowwise() += shift->value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  Matrix<T> backward(const LayerNormCache<T>& c, const Matrix<T>& dy, GradBuffer<T>& g) const {
    g[gain->slot] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    g[shift->slot] += dy.colwise().sum();
    const Matrix<T> dxhat = (dy.array().rowwise() * gain->value.row(0).array()).matrix();
    const auto d = static_cast<T>(dy.cols());
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T m1 = dxhat.row(r).sum() / d;
      const T m2 = dxhat.row(r).dot(c.xhat.row(r)) / d;
      dx.row(r) = c.rstd(r, 0) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
    }
    return dx;
  }
};

template <typename T>
struct BatchNormCache {
  Matrix<T> xhat;
  RowVector<T> inv_std;
  bool train = false;
};

/// Per-column batch normalization over rows. Running statistics are stored
/// as non-trainable parameters so checkpoints carry them.
template <typename T>
struct BatchNorm1d {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  Parameter<T>* running_mean = nullptr;
  Parameter<T>* running_var = nullptr;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);

  BatchNorm1d() = default;
  BatchNorm1d(ParameterSet<T>& ps, const std::string& name, Eigen::Index dim) {
    gamma = &ps.add(name + ".gamma", Matrix<T>::Ones(1, dim));
    beta = &ps.add(name + ".beta", Matrix<T>::Zero(1, dim));
    running_mean = &ps.add(name + ".running_mean", Matrix<T>::Zero(1, dim), false);
    running_var = &ps.add(name + ".running_var", Matrix<T>::Ones(1, dim), false);
  }

  /// Train mode normalizes with batch statistics and updates the running
  /// estimates (unbiased variance); eval mode uses the running estimates.
  Matrix<T> forward(const Matrix<T>& x, bool train, BatchNormCache<T>* cache = nullptr) const {
    require_shape(x.cols() == gamma->value.cols(), "batch_norm: width mismatch");
    require_shape(x.rows() > 0, "batch_norm: empty batch");
    RowVector<T> mean, var;
    if (train) {
      const auto n = static_cast<T>(x.rows());
      mean = x.colwise().sum() / n;
      var = (x.rowwise() - mean).array().square().colwise().sum().matrix() / n;
      const T unbias = x.rows() > 1 ? n / (n - T(1)) : T(1);
      running_mean->value.row(0) = (T(1) - momentum) * running_mean->value.row(0) + momentum * mean;
      running_var->value.row(0) =
          (T(1) - momentum) * running_var->value.row(0) + momentum * unbias * var;
    } else {
      mean = running_mean->value.row(0);
      var = running_var->value.row(0);
    }
    const RowVector<T> inv_std = (var.array() + eps).rsqrt().matrix();
    Matrix<T> xhat = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
    Matrix<T> y = (xhat.array().rowwise() * gamma->value.row(0).array()).matrix();
    y.rowwise() += beta->value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = inv_std;
      cache->train = train;
    }
    return y;
  }

  Matrix<T> backward(const BatchNormCache<T>& c, const Matrix<T>& dy, GradBuffer<T>& g) const {
    g[gamma->slot] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    g[beta->slot] += dy.colwise().sum();
    const Matrix<T> dxhat = (dy.array().rowwise() * gamma->value.row(0).array()).matrix();
    if (!c.train) return (dxhat.array().rowwise() * c.inv_std.array()).matrix();
    const auto n = static_cast<T>(dy.rows());
    const RowVector<T> s1 = dxhat.colwise().sum();
    const RowVector<T> s2 = (dxhat.array() * c.xhat.array()).colwise().sum().matrix();
    Matrix<T> dx = (dxhat * n).rowwise() - s1;
    dx -= (c.xhat.array().rowwise() * s2.array()).matrix();
    dx = (dx.array().rowwise() * (c.inv_std.array() / n)).matrix();
    return dx;
  }
};

/// Inverted dropout. An empty mask means identity (eval mode or rate 0).
template <typename T>
struct DropoutMask {
  Matrix<T> scale;
  bool identity() const { return scale.size() == 0; }
};

template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double rate, bool train, Rng& rng,
                  DropoutMask<T>* mask = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) {
    if (mask) mask->scale.resize(0, 0);
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Matrix<T> s(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform() < rate ? T(0) : keep_scale;
  Matrix<T> y = x.cwiseProduct(s);
  if (mask) mask->scale = std::move(s);
  return y;
}

template <typename T>
Matrix<T> dropout_backward(const DropoutMask<T>& mask, const Matrix<T>& dy) {
  return mask.identity() ? dy : dy.cwiseProduct(mask.scale);
}

/// Exact GELU: x * Phi(x).
template <typename T>
Matrix<T> gelu(const Matrix<T>& x) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  return x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
}

template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  const Matrix<T> d = x.unaryExpr([](T v) {
    return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
  });
  return dy.cwiseProduct(d);
}

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  return (x.array() > T(0)).select(dy, Matrix<T>::Zero(dy.rows(), dy.cols()));
}

/// Row-wise softmax with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    const T lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  return y;
}

/// Token embedding table. Row `padding_idx` is held at zero and never
/// receives gradient.
template <typename T>
struct Embedding {
  Parameter<T>* table = nullptr;  // (vocab, dim)
  int padding_idx = 0;

  Embedding() = default;
  Embedding(ParameterSet<T>& ps, const std::string& name, Eigen::Index vocab, Eigen::Index dim,
            Rng& rng, int pad = 0) : padding_idx(pad) {
    Matrix<T> init = normal_init<T>(vocab, dim, T(1), rng);
    if (pad >= 0 && pad < vocab) init.row(pad).setZero();
    table = &ps.add(name + ".table", std::move(init));
  }

  Eigen::Index vocab_size() const { return table->value.rows(); }
  Eigen::Index dim() const { return table->value.cols(); }

  Matrix<T> forward(std::span<const std::int32_t> ids) const {
    Matrix<T> out(static_cast<Eigen::Index>(ids.size()), dim());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto id = ids[i];
      if (id < 0 || id >= vocab_size())
        throw ShapeError("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(vocab_size()));
      if (id == padding_idx)
        out.row(static_cast<Eigen::Index>(i)).setZero();
      else
        out.row(static_cast<Eigen::Index>(i)) = table->value.row(id);
    }
    return out;
  }

  void backward(std::span<const std::int32_t> ids, const Matrix<T>& dy, GradBuffer<T>& g) const {
    auto& gt = g[table->slot];
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != padding_idx) gt.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
  }
};

template <typename T>
struct LossResult {
  T loss = 0;
  Matrix<T> dlogits;
};

/// Mean over the batch of w[y] * -log softmax(logits)[y].
template <typename T>
LossResult<T> weighted_cross_entropy(const Matrix<T>& logits, std::span<const int> labels,
                                     std::span<const double> class_weights) {
  require_shape(logits.rows() == static_cast<Eigen::Index>(labels.size()),
                "cross_entropy: batch size mismatch");
  require_shape(logits.cols() == static_cast<Eigen::Index>(class_weights.size()),
                "cross_entropy: class count mismatch");
  require_finite(logits, "logits");
  LossResult<T> out;
  out.dlogits = softmax_rows(logits);
  const Matrix<T> logp = log_softmax_rows(logits);
  const auto n = static_cast<T>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols())
      throw ValidationError("label", "label " + std::to_string(y) + " outside {0,1}");
    const auto r = static_cast<Eigen::Index>(i);
    const auto w = static_cast<T>(class_weights[static_cast<std::size_t>(y)]);
    out.loss -= w * logp(r, y);
    out.dlogits(r, y) -= T(1);
    out.dlogits.row(r) *= w / n;
  }
  if (!labels.empty()) out.loss /= n;
  return out;
}

/// w_c = N / (2 N_c); classes absent from `labels` get weight 1.
inline std::vector<double> balanced_class_weights(std::span<const int> labels) {
  std::size_t count[2] = {0, 0};
  for (int y : labels)
    if (y == 0 || y == 1) ++count[y];
  const auto n = static_cast<double>(labels.size());
  std::vector<double> w(2, 1.0);
  for (int c = 0; c < 2; ++c)
    if (count[c] > 0) w[static_cast<std::size_t>(c)] = n / (2.0 * static_cast<double>(count[c]));
  return w;
}

}  // namespace cvrm::nn
