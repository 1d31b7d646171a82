// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cvrm/common/error.hpp"

namespace cvrm::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
std::string shape_str(const Matrix<T>& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + std::string(what));
}

inline void require_shape(bool ok, std::string_view what) {
  if (!ok) throw ShapeError(std::string(what));
}

/// A named tensor. Non-trainable parameters hold state that must be saved
/// with the model (batch-norm running statistics) but is never optimized.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;
  std::size_t slot = 0;
};

/// Gradients indexed by parameter slot. Kept apart from the parameters so
/// several workers can accumulate into private buffers and reduce in a fixed
/// order.
template <typename T>
struct GradBuffer {
  std::vector<Matrix<T>> grads;

  Matrix<T>& operator[](std::size_t slot) { return grads[slot]; }
  const Matrix<T>& operator[](std::size_t slot) const { return grads[slot]; }

  void set_zero() {
    for (auto& g : grads) g.setZero();
  }

  GradBuffer& operator+=(const GradBuffer& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
    return *this;
  }

  GradBuffer& operator*=(T s) {
    for (auto& g : grads) g *= s;
    return *this;
  }
};

/// Owns every parameter of a model. Addresses are stable (deque), so layers
/// keep raw pointers into the set.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<T>& add(std::string name, Matrix<T> init, bool trainable = true) {
    for (const auto& p : params_)
      if (p.name == name) throw Error("duplicate parameter name '" + name + "'");
    Parameter<T> p;
    p.name = std::move(name);
    p.grad = Matrix<T>::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.trainable = trainable;
    p.slot = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter<T>& find(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw NotFoundError("no parameter named '" + std::string(name) + "'");
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  GradBuffer<T> make_grads() const {
    GradBuffer<T> g;
    g.grads.reserve(params_.size());
    for (const auto& p : params_) g.grads.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    return g;
  }

  /// Copies a buffer into the per-parameter `grad` fields.
  void load_grads(const GradBuffer<T>& g) {
    for (auto& p : params_) p.grad = g[p.slot];
  }

  std::vector<Matrix<T>> snapshot() const {
    std::vector<Matrix<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Matrix<T>>& values) {
    if (values.size() != params_.size()) throw ShapeError("snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      require_shape(values[i].rows() == params_[i].value.rows() &&
                        values[i].cols() == params_[i].value.cols(),
                    "snapshot shape mismatch for " + params_[i].name);
      params_[i].value = values[i];
    }
  }

  /// Copies values from a set of another scalar type with identical layout.
  template <typename U>
  void copy_from(const ParameterSet<U>& other) {
    if (other.size() != size()) throw ShapeError("parameter count mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      if (other[i].name != params_[i].name) throw ShapeError("parameter order mismatch");
      params_[i].value = other[i].value.template cast<T>();
    }
  }

 private:
  std::deque<Parameter<T>> params_;
};

}  // namespace cvrm::nn
