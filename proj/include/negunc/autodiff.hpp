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

// Tape-based reverse-mode automatic differentiation over dense row-major
// matrices.
//
// A Tape records every operation applied to Vars. Leaves are either
// trainable Parameters (gradients are flushed back into Parameter::grad by
// backward()) or constants. Gradient routing is controlled entirely at the
// leaves: `frozen(p)` reads a parameter without making it trainable and
// `detach(v)` cuts the graph below v. A node whose parents are all constants
// carries no backward closure at all.
//
// Matrices are batch-major: one example per row.

#ifndef NEGUNC_AUTODIFF_HPP_
#define NEGUNC_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace negunc::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> v) { return push(std::move(v), false, nullptr); }

  Var<T> scalar(T v) {
    Matrix<T> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Trainable leaf. Repeated calls for the same parameter share one node.
  Var<T> param(Parameter<T>& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return Var<T>(this, it->second);
    Var<T> v = push(p.value, true, nullptr);
    bound_.emplace(&p, v.id());
    return v;
  }

  // Reads a parameter's current value as a constant. No gradient reaches it.
  Var<T> frozen(const Parameter<T>& p) {
    if (auto it = frozen_.find(&p); it != frozen_.end()) return Var<T>(this, it->second);
    Var<T> v = constant(p.value);
    frozen_.emplace(&p, v.id());
    return v;
  }

  Var<T> detach(const Var<T>& v) { return constant(v.value()); }

  // Records an op result. The closure runs only if some parent needs a gradient.
  Var<T> push(Matrix<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad,
                          requires_grad ? std::move(backward) : Backward()});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Matrix<T>& grad(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Adds `g` into a column block of node `id`'s gradient.
  template <typename Expr>
  void accumulate_cols(int id, Eigen::Index start, Eigen::Index count, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad.middleCols(start, count) += g;
  }

  template <typename Expr>
  void accumulate_rows(int id, Eigen::Index start, Eigen::Index count, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad.middleRows(start, count) += g;
  }

  void accumulate_row(int id, Eigen::Index row, const Eigen::Ref<const Matrix<T>>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    n.grad.row(row) += g;
  }

  // Reverse sweep from a 1x1 loss; parameter gradients are added into
  // Parameter::grad. Calling backward twice on one tape is not supported.
  void backward(const Var<T>& loss, T seed = T(1)) {
    if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!nodes_[loss.id()].requires_grad) return;
    Matrix<T> s(1, 1);
    s(0, 0) = seed;
    accumulate(loss.id(), s);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
    for (auto& [p, id] : bound_) {
      if (nodes_[id].grad.size() != 0) p->grad += nodes_[id].grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad;
    Backward backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, int> bound_;
  std::unordered_map<const Parameter<T>*, int> frozen_;
};

namespace detail {

template <typename T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

template <typename T>
T stable_softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape<T>& tp = *a.tape();
  Matrix<T> out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return tp.push(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, int self) {
                          t.accumulate(ia, t.grad(self));
                          t.accumulate(ib, t.grad(self));
                        });
}

template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, int self) {
                          t.accumulate(ia, t.grad(self));
                          t.accumulate(ib, -t.grad(self));
                        });
}

template <typename T>
Var<T> operator-(const Var<T>& a) {
  const int ia = a.id();
  return a.tape()->push(-a.value(), a.requires_grad(),
                        [ia](Tape<T>& t, int self) { t.accumulate(ia, -t.grad(self)); });
}

// Elementwise product.
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, int self) {
                          const Matrix<T>& g = t.grad(self);
                          if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                          if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                        });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  const int ia = a.id();
  return a.tape()->push(a.value() * s, a.requires_grad(),
                        [ia, s](Tape<T>& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  const int ia = a.id();
  return a.tape()->push((a.value().array() + s).matrix(), a.requires_grad(),
                        [ia](Tape<T>& t, int self) { t.accumulate(ia, t.grad(self)); });
}

// a (n x m) + row (1 x m), broadcast over rows.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  detail::check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix<T> out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->push(std::move(out), a.requires_grad() || row.requires_grad(),
                        [ia, ir](Tape<T>& t, int self) {
                          t.accumulate(ia, t.grad(self));
                          if (t.requires_grad(ir)) t.accumulate(ir, t.grad(self).colwise().sum());
                        });
}

// a (n x m) * row (1 x m), broadcast over rows.
template <typename T>
Var<T> mul_row(const Var<T>& a, const Var<T>& row) {
  detail::check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix<T> out = a.value();
  out.array().rowwise() *= row.value().array().row(0);
  return a.tape()->push(std::move(out), a.requires_grad() || row.requires_grad(),
                        [ia, ir](Tape<T>& t, int self) {
                          const Matrix<T>& g = t.grad(self);
                          if (t.requires_grad(ia)) {
                            Matrix<T> ga = g;
                            ga.array().rowwise() *= t.value(ir).array().row(0);
                            t.accumulate(ia, ga);
                          }
                          if (t.requires_grad(ir)) {
                            t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
                          }
                        });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().unaryExpr([](T x) { return detail::stable_sigmoid(x); });
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    const Matrix<T>& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())));
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().array().tanh().matrix();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    const Matrix<T>& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct((T(1) - y.array().square()).matrix()));
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().array().exp().matrix();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().array().log().matrix();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().array().square().matrix();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    t.accumulate(ia, (t.grad(self).array() * t.value(ia).array() * T(2)).matrix());
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().unaryExpr([](T x) { return detail::stable_softplus(x); });
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    Matrix<T> s = t.value(ia).unaryExpr([](T x) { return detail::stable_sigmoid(x); });
    t.accumulate(ia, t.grad(self).cwiseProduct(s));
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    const Matrix<T>& v = t.value(ia);
    t.accumulate(ia, Matrix<T>::Constant(v.rows(), v.cols(), t.grad(self)(0, 0)));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// Per-row sum: (n x m) -> (n x 1).
template <typename T>
Var<T> row_sum(const Var<T>& a) {
  const int ia = a.id();
  Matrix<T> out = a.value().rowwise().sum();
  return a.tape()->push(std::move(out), a.requires_grad(), [ia](Tape<T>& t, int self) {
    const Eigen::Index m = t.value(ia).cols();
    t.accumulate(ia, t.grad(self).replicate(1, m));
  });
}

// Per-column mean: (n x m) -> (1 x m).
template <typename T>
Var<T> col_mean(const Var<T>& a) {
  const int ia = a.id();
  const T inv = T(1) / static_cast<T>(a.rows());
  Matrix<T> out = a.value().colwise().sum() * inv;
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, inv](Tape<T>& t, int self) {
    const Eigen::Index n = t.value(ia).rows();
    t.accumulate(ia, (t.grad(self) * inv).replicate(n, 1));
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  const int ia = a.id();
  Matrix<T> out = a.value().middleCols(start, count);
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, start, count](Tape<T>& t, int self) {
    t.accumulate_cols(ia, start, count, t.grad(self));
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  const int ia = a.id();
  Matrix<T> out = a.value().middleRows(start, count);
  return a.tape()->push(std::move(out), a.requires_grad(), [ia, start, count](Tape<T>& t, int self) {
    t.accumulate_rows(ia, start, count, t.grad(self));
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix<T> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape()->push(std::move(out), needs, [ids, widths](Tape<T>& t, int self) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], t.grad(self).middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool needs = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const auto& p : parts) {
    detail::check_same_tape(parts.front(), p);
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    needs = needs || p.requires_grad();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix<T> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape()->push(std::move(out), needs, [ids, heights](Tape<T>& t, int self) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], t.grad(self).middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

// Embedding lookup: row i of the result is row ids[i] of `table`.
template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<int>& ids) {
  const Matrix<T>& tv = table.value();
  Matrix<T> out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  const int it = table.id();
  return table.tape()->push(std::move(out), table.requires_grad(), [it, ids](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.accumulate_row(it, ids[i], g.row(static_cast<Eigen::Index>(i)));
    }
  });
}

// Row-wise select: mask(i) == 1 takes row i of `a`, otherwise row i of `b`.
template <typename T>
Var<T> blend(const std::vector<char>& mask, const Var<T>& a, const Var<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "blend");
  if (static_cast<Eigen::Index>(mask.size()) != a.rows()) throw std::invalid_argument("blend: mask size");
  Matrix<T> out = b.value();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.row(static_cast<Eigen::Index>(i)) = a.value().row(static_cast<Eigen::Index>(i));
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), a.requires_grad() || b.requires_grad(),
                        [mask, ia, ib](Tape<T>& t, int self) {
                          const Matrix<T>& g = t.grad(self);
                          Matrix<T> ga = g, gb = g;
                          for (std::size_t i = 0; i < mask.size(); ++i) {
                            if (mask[i]) {
                              gb.row(static_cast<Eigen::Index>(i)).setZero();
                            } else {
                              ga.row(static_cast<Eigen::Index>(i)).setZero();
                            }
                          }
                          t.accumulate(ia, ga);
                          t.accumulate(ib, gb);
                        });
}

// LSTM cell nonlinearity. `pre` holds the pre-activations of the input,
// forget, cell and output gates (in that order, each `hidden` wide). Returns
// [h | c] of width 2*hidden.
template <typename T>
Var<T> lstm_pointwise(const Var<T>& pre, const Var<T>& c_prev) {
  detail::check_same_tape(pre, c_prev);
  const Eigen::Index h = c_prev.cols();
  if (pre.cols() != 4 * h || pre.rows() != c_prev.rows()) throw std::invalid_argument("lstm_pointwise: shape mismatch");
  const Matrix<T>& a = pre.value();
  auto sig = [](T x) { return detail::stable_sigmoid(x); };
  Matrix<T> i = a.middleCols(0, h).unaryExpr(sig);
  Matrix<T> f = a.middleCols(h, h).unaryExpr(sig);
  Matrix<T> g = a.middleCols(2 * h, h).array().tanh().matrix();
  Matrix<T> o = a.middleCols(3 * h, h).unaryExpr(sig);
  Matrix<T> c = f.cwiseProduct(c_prev.value()) + i.cwiseProduct(g);
  Matrix<T> out(a.rows(), 2 * h);
  out.middleCols(0, h) = o.cwiseProduct(c.array().tanh().matrix());
  out.middleCols(h, h) = c;
  const int ip = pre.id(), ic = c_prev.id();
  return pre.tape()->push(std::move(out), pre.requires_grad() || c_prev.requires_grad(),
                          [ip, ic, h](Tape<T>& t, int self) {
                            const Matrix<T>& a = t.value(ip);
                            const Matrix<T>& cp = t.value(ic);
                            const Matrix<T>& out = t.value(self);
                            const Matrix<T>& gout = t.grad(self);
                            auto sig = [](T x) { return detail::stable_sigmoid(x); };
                            const Matrix<T> i = a.middleCols(0, h).unaryExpr(sig);
                            const Matrix<T> f = a.middleCols(h, h).unaryExpr(sig);
                            const Matrix<T> g = a.middleCols(2 * h, h).array().tanh().matrix();
                            const Matrix<T> o = a.middleCols(3 * h, h).unaryExpr(sig);
                            const Matrix<T> tc = out.middleCols(h, h).array().tanh().matrix();
                            const Matrix<T> dh = gout.middleCols(0, h);
                            Matrix<T> dc = gout.middleCols(h, h);
                            dc.array() += dh.array() * o.array() * (T(1) - tc.array().square());
                            if (t.requires_grad(ip)) {
                              Matrix<T> da(a.rows(), 4 * h);
                              da.middleCols(0, h) = (dc.array() * g.array() * i.array() * (T(1) - i.array())).matrix();
                              da.middleCols(h, h) = (dc.array() * cp.array() * f.array() * (T(1) - f.array())).matrix();
                              da.middleCols(2 * h, h) = (dc.array() * i.array() * (T(1) - g.array().square())).matrix();
                              da.middleCols(3 * h, h) = (dh.array() * tc.array() * o.array() * (T(1) - o.array())).matrix();
                              t.accumulate(ip, da);
                            }
                            if (t.requires_grad(ic)) t.accumulate(ic, dc.cwiseProduct(f));
                          });
}

// Masked token-level negative log-likelihood of `targets` under
// softmax(logits), summed over rows: sum_i w_i * (logsumexp(l_i) - l_i[y_i]).
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& targets, const std::vector<T>& weights) {
  const Matrix<T>& l = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != l.rows() || weights.size() != targets.size()) {
    throw std::invalid_argument("softmax_cross_entropy: target count mismatch");
  }
  Matrix<T> probs(l.rows(), l.cols());
  T total = 0;
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    const T mx = l.row(r).maxCoeff();
    probs.row(r) = (l.row(r).array() - mx).exp().matrix();
    const T z = probs.row(r).sum();
    probs.row(r) /= z;
    if (weights[r] != T(0)) {
      if (targets[r] < 0 || targets[r] >= l.cols()) throw std::out_of_range("softmax_cross_entropy: bad target");
      total += weights[r] * (mx + std::log(z) - l(r, targets[r]));
    }
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  const int il = logits.id();
  return logits.tape()->push(std::move(out), logits.requires_grad(),
                             [il, targets, weights, probs = std::move(probs)](Tape<T>& t, int self) {
                               const T g = t.grad(self)(0, 0);
                               Matrix<T> d = probs;
                               for (Eigen::Index r = 0; r < d.rows(); ++r) {
                                 if (weights[r] == T(0)) {
                                   d.row(r).setZero();
                                   continue;
                                 }
                                 d(r, targets[r]) -= T(1);
                                 d.row(r) *= g * weights[r];
                               }
                               t.accumulate(il, d);
                             });
}

// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const std::vector<int>& labels) {
  const Matrix<T>& l = logits.value();
  if (l.cols() != 1 || static_cast<Eigen::Index>(labels.size()) != l.rows()) {
    throw std::invalid_argument("bce_with_logits: expects an n x 1 logit column and n labels");
  }
  const T n = static_cast<T>(l.rows());
  T total = 0;
  for (Eigen::Index r = 0; r < l.rows(); ++r) total += detail::stable_softplus(l(r, 0)) - T(labels[r]) * l(r, 0);
  Matrix<T> out(1, 1);
  out(0, 0) = total / n;
  const int il = logits.id();
  return logits.tape()->push(std::move(out), logits.requires_grad(), [il, labels, n](Tape<T>& t, int self) {
    const Matrix<T>& l = t.value(il);
    const T g = t.grad(self)(0, 0) / n;
    Matrix<T> d(l.rows(), 1);
    for (Eigen::Index r = 0; r < l.rows(); ++r) d(r, 0) = g * (detail::stable_sigmoid(l(r, 0)) - T(labels[r]));
    t.accumulate(il, d);
  });
}

// Mean binary entropy H[sigmoid(l)] over an n x 1 logit column.
template <typename T>
Var<T> binary_entropy_logits(const Var<T>& logits) {
  const Matrix<T>& l = logits.value();
  if (l.cols() != 1) throw std::invalid_argument("binary_entropy_logits: expects an n x 1 column");
  const T n = static_cast<T>(l.rows());
  T total = 0;
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    const T x = l(r, 0);
    const T p = detail::stable_sigmoid(x);
    total += p * detail::stable_softplus(-x) + (T(1) - p) * detail::stable_softplus(x);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total / n;
  const int il = logits.id();
  return logits.tape()->push(std::move(out), logits.requires_grad(), [il, n](Tape<T>& t, int self) {
    const Matrix<T>& l = t.value(il);
    const T g = t.grad(self)(0, 0) / n;
    Matrix<T> d(l.rows(), 1);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      const T x = l(r, 0);
      const T p = detail::stable_sigmoid(x);
      d(r, 0) = -g * x * p * (T(1) - p);
    }
    t.accumulate(il, d);
  });
}

template <typename T>
Var<T> operator+(const Var<T>& a, T s) { return add_scalar(a, s); }
template <typename T>
Var<T> operator*(T s, const Var<T>& a) { return scale(a, s); }

}  // namespace negunc::ad

#endif  // NEGUNC_AUTODIFF_HPP_
