// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/common/error.hpp"

namespace cvrm::baselines {

struct SvcConfig {
  double C = 1.0;
  double tol = 1e-4;
  int max_iter = 1000;
};

/// Linear SVC trained in the primal on
///   1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))^2
/// with the bias unregularized.
struct SvcModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  SvcConfig config;
  std::vector<double> objective_history;
  bool converged = false;

  template <typename Mat>
  Eigen::VectorXd decision(const Mat& x) const {
    Eigen::VectorXd d = x * weights;
    d.array() += bias;
    return d;
  }

  template <typename Mat>
  std::vector<int> predict(const Mat& x) const {
    const Eigen::VectorXd d = decision(x);
    std::vector<int> out(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) out[static_cast<std::size_t>(i)] = d(i) > 0.0 ? 1 : 0;
    return out;
  }

  double final_objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }

  nlohmann::ordered_json to_json() const {
    return {{"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
            {"bias", bias},
            {"C", config.C},
            {"tol", config.tol},
            {"objective", final_objective()}};
  }

  static SvcModel from_json(const nlohmann::json& j) {
    SvcModel m;
    const auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = j.at("bias").get<double>();
    m.config.C = j.value("C", 1.0);
    m.config.tol = j.value("tol", 1e-4);
    return m;
  }
};

/// Objective value for labels in {0,1}.
template <typename Mat>
double svc_objective(const Mat& x, std::span<const int> labels, const Eigen::VectorXd& w, double b,
                     double C) {
  Eigen::VectorXd z = x * w;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    const double m = 1.0 - y * (z(i) + b);
    if (m > 0.0) loss += m * m;
  }
  return 0.5 * w.squaredNorm() + C * loss;
}

/// Newton-CG on the generalized Hessian with Armijo backtracking. Each accepted step lowers
/// the objective; iteration stops once the relative decrease drops below tol.
template <typename Mat>
SvcModel svc_train(const Mat& x, std::span<const int> labels, const SvcConfig& cfg = {}) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("svc: row/label count mismatch");
  if (n == 0) throw ConfigError("svc: empty training set");
  if (!(cfg.C > 0.0) || !(cfg.tol > 0.0)) throw ConfigError("svc: C and tol must be positive");
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 0 && l != 1) throw ValidationError("label", "svc labels must be 0 or 1");
    y(i) = l == 1 ? 1.0 : -1.0;
  }

  SvcModel model;
  model.config = cfg;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  double f = svc_objective(x, labels, w, b, cfg.C);
  model.objective_history.push_back(f);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    const Eigen::VectorXd z = x * w;
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(n);  // d loss / d z_i, scaled
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = 1.0 - y(i) * (z(i) + b);
      if (m > 0.0) {
        coef(i) = -2.0 * cfg.C * y(i) * m;
        active.push_back(i);
      }
    }
    const Eigen::VectorXd gw = w + x.transpose() * coef;
    const double gb = coef.sum();
    const double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
    if (gnorm < 1e-12) {
      model.converged = true;
      break;
    }

    Eigen::VectorXd act = Eigen::VectorXd::Zero(n);
    for (auto i : active) act(i) = 1.0;
    // Generalized Hessian-vector product on (w, b).
    auto hess = [&](const Eigen::VectorXd& vw, double vb, Eigen::VectorXd& hw, double& hb) {
      Eigen::VectorXd xv = x * vw;
      xv.array() += vb;
      xv = (xv.array() * act.array()).matrix() * (2.0 * cfg.C);
      hw = vw + x.transpose() * xv;
      hb = xv.sum() + 1e-12 * vb;
    };

    // Conjugate gradient for H s = -g.
    Eigen::VectorXd sw = Eigen::VectorXd::Zero(d), rw = -gw, pw = rw;
    double sb = 0.0, rb = -gb, pb = rb;
    double rr = rw.squaredNorm() + rb * rb;
    const double cg_tol = 0.1 * gnorm;
    for (int k = 0; k < 200 && std::sqrt(rr) > cg_tol; ++k) {
      Eigen::VectorXd hw;
      double hb;
      hess(pw, pb, hw, hb);
      const double php = pw.dot(hw) + pb * hb;
      if (php <= 0.0) break;
      const double alpha = rr / php;
      sw += alpha * pw;
      sb += alpha * pb;
      rw -= alpha * hw;
      rb -= alpha * hb;
      const double rr_new = rw.squaredNorm() + rb * rb;
      pw = rw + (rr_new / rr) * pw;
      pb = rb + (rr_new / rr) * pb;
      rr = rr_new;
    }
    if (sw.squaredNorm() + sb * sb == 0.0) {
      sw = -gw;
      sb = -gb;
    }

    const double slope = gw.dot(sw) + gb * sb;
    double step = 1.0, f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      f_new = svc_objective(x, labels, w + step * sw, b + step * sb, cfg.C);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f_new > f) {
      model.converged = true;
      break;
    }
    w += step * sw;
    b += step * sb;
    const double decrease = f - f_new;
    f = f_new;
    model.objective_history.push_back(f);
    if (decrease <= cfg.tol * std::max(1.0, std::abs(f))) {
      model.converged = true;
      break;
    }
  }
  if (!model.converged)
    spdlog::warn("svc: no convergence within {} iterations; returning last iterate", cfg.max_iter);
  model.weights = std::move(w);
  model.bias = b;
  return model;
}

}  // namespace cvrm::baselines
