/* Copyright 2026 The negunc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// L2-regularized binary logistic regression fitted by Newton's method.
// The penalty is 0.5 * l2 * ||w||^2 on the weights only; the intercept is
// unpenalized.

#ifndef NEGUNC_LOGISTIC_HPP_
#define NEGUNC_LOGISTIC_HPP_

#include "negunc/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace negunc::stats {

struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;

  Eigen::VectorXd decision(const Eigen::MatrixXd& x) const {
    if (x.cols() != weights.size()) throw ValidationError("logistic: feature dimension mismatch");
    return (x * weights).array() + intercept;
  }

  std::vector<int> predict(const Eigen::MatrixXd& x) const {
    const Eigen::VectorXd d = decision(x);
    std::vector<int> out(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) out[static_cast<std::size_t>(i)] = d(i) > 0.0 ? 1 : 0;
    return out;
  }
};

inline LogisticModel fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y, double l2 = 1.0,
                                  int max_iterations = 50, double tolerance = 1e-10) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (static_cast<Eigen::Index>(y.size()) != n) throw ValidationError("logistic: label count mismatch");
  if (n == 0) throw ValidationError("logistic: no training rows");
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw ValidationError("logistic: labels must be 0/1");
    (v ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw ValidationError("logistic: training labels must contain both classes");

  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)];
  auto objective = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd eta = (x * th.head(d)).array() + th(d);
    double f = 0.5 * l2 * th.head(d).squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + e^eta) - y * eta
      const double e = eta(i);
      f += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - target(i) * e;
    }
    return f;
  };
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);  // [w ; b]
  double current = objective(theta);
  Eigen::VectorXd p(n), wdiag(n);
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd eta = (x * theta.head(d)).array() + theta(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = eta(i) >= 0 ? 1.0 / (1.0 + std::exp(-eta(i))) : std::exp(eta(i)) / (1.0 + std::exp(eta(i)));
      wdiag(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Eigen::VectorXd r = p - target;
    Eigen::VectorXd grad(d + 1);
    grad.head(d) = x.transpose() * r + l2 * theta.head(d);
    grad(d) = r.sum();
    Eigen::MatrixXd h(d + 1, d + 1);
    const Eigen::MatrixXd xw = x.array().colwise() * wdiag.array();
    h.topLeftCorner(d, d) = x.transpose() * xw;
    h.topLeftCorner(d, d).diagonal().array() += l2;
    h.topRightCorner(d, 1) = xw.colwise().sum().transpose();
    h.bottomLeftCorner(1, d) = h.topRightCorner(d, 1).transpose();
    h(d, d) = wdiag.sum();
    Eigen::VectorXd step = h.ldlt().solve(grad);
    // Backtrack until the penalized log-loss does not increase.
    double scale = 1.0, next = objective(theta - step);
    while (next > current && scale > 1e-6) {
      scale *= 0.5;
      next = objective(theta - scale * step);
    }
    step *= scale;
    theta -= step;
    current = next;
    if (step.cwiseAbs().maxCoeff() < tolerance * (1.0 + theta.cwiseAbs().maxCoeff())) break;
  }
  LogisticModel m;
  m.weights = theta.head(d);
  m.intercept = theta(d);
  return m;
}

}  // namespace negunc::stats

#endif  // NEGUNC_LOGISTIC_HPP_
