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

// Layers and optimizers on top of the autodiff tape.

#ifndef NEGUNC_NN_HPP_
#define NEGUNC_NN_HPP_

#include "negunc/autodiff.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace negunc::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

using Rng = std::mt19937_64;

// How a layer binds its parameters on a tape.
enum class Binding { kTrainable, kFrozen };

template <typename T>
Var<T> bind(Tape<T>& tape, Parameter<T>& p, Binding b) {
  return b == Binding::kTrainable ? tape.param(p) : tape.frozen(p);
}

template <typename T>
Matrix<T> uniform_matrix(Eigen::Index rows, Eigen::Index cols, T bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
Matrix<T> normal_matrix(Eigen::Index rows, Eigen::Index cols, T stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

// y = x W + b with W stored as (in x out).
template <typename T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(in));
    weight = Parameter<T>(name + ".weight", uniform_matrix<T>(in, out, bound, rng));
    bias = Parameter<T>(name + ".bias", uniform_matrix<T>(1, out, bound, rng));
  }

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x, Binding b = Binding::kTrainable) {
    return ad::add_row(ad::matmul(x, bind(tape, weight, b)), bind(tape, bias, b));
  }

  // Tape-free evaluation.
  Matrix<T> apply(const Matrix<T>& x) const {
    Matrix<T> y;
    y.noalias() = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  template <typename F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
};

template <typename T>
struct Embedding {
  Parameter<T> table;

  Embedding() = default;
  Embedding(const std::string& name, Eigen::Index vocab, Eigen::Index dim, Rng& rng)
      : table(name + ".table", normal_matrix<T>(vocab, dim, T(1), rng)) {}

  Eigen::Index dim() const { return table.value.cols(); }

  Var<T> operator()(Tape<T>& tape, const std::vector<int>& ids, Binding b = Binding::kTrainable) {
    return ad::gather_rows(bind(tape, table, b), ids);
  }

  template <typename F>
  void visit(F&& f) {
    f(table);
  }
};

// One unidirectional LSTM layer; gates computed from [x ; h].
template <typename T>
struct LstmLayer {
  Linear<T> gates;
  Eigen::Index hidden = 0;

  LstmLayer() = default;
  LstmLayer(const std::string& name, Eigen::Index in, Eigen::Index hidden_dim, Rng& rng)
      : gates(name + ".gates", in + hidden_dim, 4 * hidden_dim, rng), hidden(hidden_dim) {
    // Forget-gate bias starts at 1.
    gates.bias.value.middleCols(hidden, hidden).setConstant(T(1));
  }

  struct State {
    Var<T> h;
    Var<T> c;
  };

  // One step. Rows with step_mask == 0 keep their previous state.
  State step(Tape<T>& tape, const Var<T>& x, const State& prev, const std::vector<char>* step_mask = nullptr,
             Binding b = Binding::kTrainable) {
    Var<T> pre = gates(tape, ad::concat_cols<T>({x, prev.h}), b);
    Var<T> hc = ad::lstm_pointwise(pre, prev.c);
    if (step_mask != nullptr) hc = ad::blend(*step_mask, hc, ad::concat_cols<T>({prev.h, prev.c}));
    return State{ad::slice_cols(hc, 0, hidden), ad::slice_cols(hc, hidden, hidden)};
  }

  template <typename F>
  void visit(F&& f) {
    gates.visit(f);
  }
};

// Inverted dropout. Identity when p == 0.
template <typename T>
Var<T> dropout(Tape<T>& tape, const Var<T>& x, T p, Rng& rng) {
  if (p <= T(0)) return x;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  Matrix<T> mask(x.rows(), x.cols());
  const T s = T(1) / (T(1) - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : T(0);
  return x * tape.constant(std::move(mask));
}

template <typename T>
struct AdamState {
  Matrix<T> m;
  Matrix<T> v;
};

// Adam over a fixed group of parameters.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    state_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      state_[i].m.setZero(params_[i]->value.rows(), params_[i]->value.cols());
      state_[i].v.setZero(params_[i]->value.rows(), params_[i]->value.cols());
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double s = 0;
    for (auto* p : params_) s += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(s);
  }

  // Applies one update. A positive `clip_norm` rescales the group's
  // gradient to that global L2 norm first.
  void step(double clip_norm = 0.0) {
    double factor = 1.0;
    if (clip_norm > 0.0) {
      const double n = grad_norm();
      if (n > clip_norm) factor = clip_norm / n;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step_size = static_cast<T>(lr_ / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      AdamState<T>& s = state_[i];
      const auto g = (p.grad.array() * static_cast<T>(factor));
      s.m.array() = b1 * s.m.array() + (T(1) - b1) * g;
      s.v.array() = b2 * s.v.array() + (T(1) - b2) * g.square();
      p.value.array() -= step_size * s.m.array() / ((s.v.array() * inv_c2).sqrt() + eps);
    }
  }

  const std::vector<Parameter<T>*>& params() const { return params_; }
  std::vector<AdamState<T>>& state() { return state_; }
  const std::vector<AdamState<T>>& state() const { return state_; }
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<AdamState<T>> state_;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
};

}  // namespace negunc::nn

#endif  // NEGUNC_NN_HPP_
