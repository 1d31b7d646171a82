// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>

#include "cvrm/nn/tensor.hpp"

namespace cvrm::hencoder {

using Eigen::Index;
using nn::Matrix;

/// Rotates pairs (x[2j], x[2j+1]) of every head by angle m * base^(-2j/dh),
/// where m is the row's position. `inverse` rotates by the negative angle,
/// which is also the backward pass.
template <typename T>
Matrix<T> apply_rope(const Matrix<T>& x, Index heads, std::span<const double> positions,
                     double base, bool inverse = false) {
  nn::require_shape(heads > 0 && x.cols() % heads == 0, "rope: width not divisible by heads");
  const Index dh = x.cols() / heads;
  if (dh % 2 != 0) throw ShapeError("rope: dim_head must be even");
  nn::require_shape(static_cast<Index>(positions.size()) == x.rows(), "rope: positions size mismatch");
  Matrix<T> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index j = 0; j < dh / 2; ++j) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(dh));
      const double angle = positions[static_cast<std::size_t>(r)] * theta;
      const auto c = static_cast<T>(std::cos(angle));
      const auto s = static_cast<T>(inverse ? -std::sin(angle) : std::sin(angle));
      for (Index h = 0; h < heads; ++h) {
        const Index a = h * dh + 2 * j;
        const T x0 = x(r, a), x1 = x(r, a + 1);
        y(r, a) = x0 * c - x1 * s;
        y(r, a + 1) = x0 * s + x1 * c;
      }
    }
  }
  return y;
}

/// Precomputed cos/sin for positions 0..max_len-1.
template <typename T>
class RopeTable {
 public:
  RopeTable() = default;
  RopeTable(Index max_len, Index dim_head, double base) : dh_(dim_head) {
    if (dim_head % 2 != 0) throw ShapeError("rope: dim_head must be even");
    cos_.resize(max_len, dim_head / 2);
    sin_.resize(max_len, dim_head / 2);
    for (Index j = 0; j < dim_head / 2; ++j) {
      const double theta =
          std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(dim_head));
      for (Index m = 0; m < max_len; ++m) {
        cos_(m, j) = static_cast<T>(std::cos(static_cast<double>(m) * theta));
        sin_(m, j) = static_cast<T>(std::sin(static_cast<double>(m) * theta));
      }
    }
  }

  Index max_len() const { return cos_.rows(); }

  /// Positions are row indices.
  Matrix<T> apply(const Matrix<T>& x, bool inverse = false) const {
    nn::require_shape(x.rows() <= max_len(), "rope: sequence longer than table");
    nn::require_shape(x.cols() % dh_ == 0, "rope: width not divisible by dim_head");
    const Index heads = x.cols() / dh_, half = dh_ / 2;
    Matrix<T> y(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      for (Index h = 0; h < heads; ++h) {
        for (Index j = 0; j < half; ++j) {
          const T c = cos_(r, j), s = inverse ? -sin_(r, j) : sin_(r, j);
          const Index a = h * dh_ + 2 * j;
          const T x0 = x(r, a), x1 = x(r, a + 1);
          y(r, a) = x0 * c - x1 * s;
          y(r, a + 1) = x0 * s + x1 * c;
        }
      }
    }
    return y;
  }

 private:
  Index dh_ = 2;
  Matrix<T> cos_, sin_;
};

}  // namespace cvrm::hencoder
