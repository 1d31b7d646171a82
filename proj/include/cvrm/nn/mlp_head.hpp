// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cvrm/nn/layers.hpp"

namespace cvrm::nn {

enum class Activation { gelu, relu };

struct MlpHeadConfig {
  Eigen::Index in = 0;
  std::vector<int> hidden;
  Eigen::Index out = 2;
  double dropout = 0.0;
  Activation activation = Activation::gelu;
};

/// Classification head: per hidden width, linear -> batch-norm -> activation
/// -> dropout; then a final linear layer.
template <typename T>
struct MlpHead {
  struct Cache {
    std::vector<Matrix<T>> inputs;   // input of every linear layer
    std::vector<BatchNormCache<T>> bn;
    std::vector<Matrix<T>> pre_act;  // batch-norm outputs
    std::vector<DropoutMask<T>> drop;
  };

  MlpHeadConfig cfg;
  std::vector<Linear<T>> linears;
  std::vector<BatchNorm1d<T>> norms;

  MlpHead() = default;
  MlpHead(ParameterSet<T>& ps, const std::string& name, MlpHeadConfig c, Rng& rng)
      : cfg(std::move(c)) {
    Eigen::Index width = cfg.in;
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
      const std::string n = name + "." + std::to_string(i);
      linears.emplace_back(ps, n + ".linear", width, cfg.hidden[i], rng);
      norms.emplace_back(ps, n + ".bn", cfg.hidden[i]);
      width = cfg.hidden[i];
    }
    linears.emplace_back(ps, name + ".out", width, cfg.out, rng);
  }

  Eigen::Index in_features() const { return cfg.in; }

  Matrix<T> forward(const Matrix<T>& x, bool train, Rng& rng, Cache* cache = nullptr) const {
    if (x.cols() != cfg.in)
      throw ShapeError("head expects " + std::to_string(cfg.in) + " input features, got " +
                       std::to_string(x.cols()));
    if (cache) *cache = {};
    Matrix<T> h = x;
    for (std::size_t i = 0; i < norms.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      BatchNormCache<T> bc;
      Matrix<T> z = norms[i].forward(linears[i].forward(h), train, &bc);
      Matrix<T> a = cfg.activation == Activation::gelu ? gelu(z) : relu(z);
      DropoutMask<T> dm;
      h = dropout(a, cfg.dropout, train, rng, &dm);
      if (cache) {
        cache->bn.push_back(std::move(bc));
        cache->pre_act.push_back(std::move(z));
        cache->drop.push_back(std::move(dm));
      }
    }
    if (cache) cache->inputs.push_back(h);
    return linears.back().forward(h);
  }

  /// Returns the gradient with respect to the head input.
  Matrix<T> backward(const Cache& c, const Matrix<T>& dout, GradBuffer<T>& g) const {
    Matrix<T> d = linears.back().backward(c.inputs.back(), dout, g);
    for (std::size_t i = norms.size(); i-- > 0;) {
      d = dropout_backward(c.drop[i], d);
      d = cfg.activation == Activation::gelu ? gelu_backward(c.pre_act[i], d)
                                             : relu_backward(c.pre_act[i], d);
      d = norms[i].backward(c.bn[i], d, g);
      d = linears[i].backward(c.inputs[i], d, g);
    }
    return d;
  }
};

}  // namespace cvrm::nn
