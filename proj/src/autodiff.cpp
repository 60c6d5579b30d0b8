// SPDX-License-Identifier: Apache-2.0
#include "asgn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace asgn::ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("ad: uninitialised Var");
  return *a.tape();
}

Tape& same_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("ad: Vars from different tapes");
  return t;
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("ad::") + op + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

// ---- Tape -------------------------------------------------------------------------

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
  nodes_.push_back(
      Node{std::move(value), Matrix(), needs_grad, needs_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = delta;
  } else {
    n.grad += delta;
  }
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("ad: root from another tape");
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("ad: backward root must be 1x1");
  }
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

// ---- elementwise / linear algebra -------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                  [ia, ib](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self));
                    t.accumulate(ib, t.grad(self));
                  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                  [ia, ib](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self));
                    t.accumulate(ib, -t.grad(self));
                  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "hadamard");
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), t.needs_grad(ia) || t.needs_grad(ib),
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("ad::add_row: row must be 1 x " + std::to_string(a.cols()));
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  const auto ia = a.id(), ir = row.id();
  return t.record(std::move(out), t.needs_grad(ia) || t.needs_grad(ir),
                  [ia, ir](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self));
                    t.accumulate(ir, t.grad(self).colwise().sum());
                  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().array() + s, t.needs_grad(ia),
                  [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self)); });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value() * s, t.needs_grad(ia),
                  [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self) * s); });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("ad::matmul: inner dimensions " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()));
  }
  const auto ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                  [ia, ib](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().transpose(), t.needs_grad(ia), [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

Var mask(Var a, const Matrix& m) {
  Tape& t = tape_of(a);
  if (m.rows() != a.rows() || m.cols() != a.cols()) {
    throw std::invalid_argument("ad::mask: shape mismatch");
  }
  const auto ia = a.id();
  return t.record(a.value().cwiseProduct(m), t.needs_grad(ia),
                  [ia, m](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self).cwiseProduct(m));
                  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, t.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().array().tanh().matrix(), t.needs_grad(ia),
                  [ia](Tape& t, std::size_t self) {
                    const Matrix& y = t.value(self);
                    t.accumulate(ia, t.grad(self).cwiseProduct(
                                         (1.0 - y.array().square()).matrix()));
                  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().cwiseMax(0.0), t.needs_grad(ia), [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, t.grad(self).cwiseProduct(
                         x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; })));
  });
}

Var softplus(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return stable_softplus(x); });
  return t.record(std::move(out), t.needs_grad(ia), [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, t.grad(self).cwiseProduct(
                         x.unaryExpr([](double v) { return stable_sigmoid(v); })));
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(a.value().array().log().matrix(), t.needs_grad(ia),
                  [ia](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
                  });
}

Var abs(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  // d|x|/dx taken as sign(x), with 0 at x == 0.
  return t.record(a.value().cwiseAbs(), t.needs_grad(ia), [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, t.grad(self).cwiseProduct(x.unaryExpr([](double v) {
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    })));
  });
}

Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

// ---- reductions -------------------------------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), t.needs_grad(ia),
                  [ia, r, c](Tape& t, std::size_t self) {
                    t.accumulate(ia, Matrix::Constant(r, c, t.grad(self)(0, 0)));
                  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("ad::mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var sum_squares(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.record(Matrix::Constant(1, 1, a.value().squaredNorm()), t.needs_grad(ia),
                  [ia](Tape& t, std::size_t self) {
                    t.accumulate(ia, 2.0 * t.grad(self)(0, 0) * t.value(ia));
                  });
}

Var row_sums(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  const auto c = a.cols();
  return t.record(a.value().rowwise().sum(), t.needs_grad(ia),
                  [ia, c](Tape& t, std::size_t self) {
                    t.accumulate(ia, t.grad(self).replicate(1, c));
                  });
}

// ---- shape ------------------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ad::concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const auto rows = parts.front().rows();
  Eigen::Index total = 0;
  bool needs = false;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("ad::concat_cols: mixed tapes");
    if (p.rows() != rows) throw std::invalid_argument("ad::concat_cols: row mismatch");
    total += p.cols();
    needs = needs || t.needs_grad(p.id());
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(out), needs, [ids, widths](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.accumulate(ids[k], g.middleCols(at, widths[k]));
      at += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ad::concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const auto cols = parts.front().cols();
  Eigen::Index total = 0;
  bool needs = false;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("ad::concat_rows: mixed tapes");
    if (p.cols() != cols) throw std::invalid_argument("ad::concat_rows: column mismatch");
    total += p.rows();
    needs = needs || t.needs_grad(p.id());
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix out(total, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t.record(std::move(out), needs, [ids, heights](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.accumulate(ids[k], g.middleRows(at, heights[k]));
      at += heights[k];
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("ad::slice_cols: range out of bounds");
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return t.record(a.value().middleCols(start, count), t.needs_grad(ia),
                  [ia, r, c, start, count](Tape& t, std::size_t self) {
                    Matrix g = Matrix::Zero(r, c);
                    g.middleCols(start, count) = t.grad(self);
                    t.accumulate(ia, g);
                  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  Tape& t = tape_of(a);
  std::vector<int> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.rows()) throw std::out_of_range("ad::gather_rows: index");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(idx[k]);
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return t.record(std::move(out), t.needs_grad(ia),
                  [ia, r, c, idx = std::move(idx)](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    Matrix ga = Matrix::Zero(r, c);
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
                    }
                    t.accumulate(ia, ga);
                  });
}

Var gather_entries(Var a, std::span<const int> index, Eigen::Index col) {
  Tape& t = tape_of(a);
  std::vector<int> idx(index.begin(), index.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= a.rows()) throw std::out_of_range("ad::gather_entries: index");
    out(static_cast<Eigen::Index>(k), 0) = a.value()(idx[k], col);
  }
  const auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return t.record(std::move(out), t.needs_grad(ia),
                  [ia, r, c, col, idx = std::move(idx)](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    Matrix ga = Matrix::Zero(r, c);
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      ga(idx[k], col) += g(static_cast<Eigen::Index>(k), 0);
                    }
                    t.accumulate(ia, ga);
                  });
}

Var scatter_pairs(Var values, std::span<const int> rows, std::span<const int> cols,
                  Eigen::Index n) {
  Tape& t = tape_of(values);
  if (values.cols() != 1 || static_cast<std::size_t>(values.rows()) != rows.size() ||
      rows.size() != cols.size()) {
    throw std::invalid_argument("ad::scatter_pairs: expected P x 1 values and P index pairs");
  }
  std::vector<int> ri(rows.begin(), rows.end()), ci(cols.begin(), cols.end());
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t p = 0; p < ri.size(); ++p) {
    out(ri[p], ci[p]) += values.value()(static_cast<Eigen::Index>(p), 0);
  }
  const auto iv = values.id();
  return t.record(std::move(out), t.needs_grad(iv),
                  [iv, ri = std::move(ri), ci = std::move(ci)](Tape& t, std::size_t self) {
                    const Matrix& g = t.grad(self);
                    Matrix gv(static_cast<Eigen::Index>(ri.size()), 1);
                    for (std::size_t p = 0; p < ri.size(); ++p) {
                      gv(static_cast<Eigen::Index>(p), 0) = g(ri[p], ci[p]);
                    }
                    t.accumulate(iv, gv);
                  });
}

// ---- graph-specific ---------------------------------------------------------------

Var segment_softmax(Var logits, std::span<const int> offsets) {
  Tape& t = tape_of(logits);
  if (logits.cols() != 1) throw std::invalid_argument("ad::segment_softmax: expected column");
  if (offsets.empty() || offsets.back() != logits.rows()) {
    throw std::invalid_argument("ad::segment_softmax: offsets do not cover input");
  }
  std::vector<int> off(offsets.begin(), offsets.end());
  const Matrix& x = logits.value();
  Matrix out(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    const int lo = off[s], hi = off[s + 1];
    if (hi <= lo) continue;
    const double mx = x.col(0).segment(lo, hi - lo).maxCoeff();
    double z = 0.0;
    for (int r = lo; r < hi; ++r) {
      out(r, 0) = std::exp(x(r, 0) - mx);
      z += out(r, 0);
    }
    for (int r = lo; r < hi; ++r) out(r, 0) /= z;
  }
  const auto ix = logits.id();
  return t.record(std::move(out), t.needs_grad(ix),
                  [ix, off = std::move(off)](Tape& t, std::size_t self) {
                    const Matrix& y = t.value(self);
                    const Matrix& g = t.grad(self);
                    Matrix gx(y.rows(), 1);
                    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                      const int lo = off[s], hi = off[s + 1];
                      double dot = 0.0;
                      for (int r = lo; r < hi; ++r) dot += g(r, 0) * y(r, 0);
                      for (int r = lo; r < hi; ++r) gx(r, 0) = y(r, 0) * (g(r, 0) - dot);
                    }
                    t.accumulate(ix, gx);
                  });
}

Var gcn_normalize(Var adjacency) {
  Tape& t = tape_of(adjacency);
  const Matrix& a = adjacency.value();
  if (a.rows() != a.cols()) throw std::invalid_argument("ad::gcn_normalize: not square");
  const auto n = a.rows();
  Matrix b = a + Matrix::Identity(n, n);
  Eigen::VectorXd d = b.rowwise().sum();
  Eigen::VectorXd s = d.array().rsqrt();
  Matrix out = s.asDiagonal() * b * s.asDiagonal();
  const auto ia = adjacency.id();
  return t.record(std::move(out), t.needs_grad(ia),
                  [ia, b = std::move(b), d = std::move(d), s = std::move(s)](Tape& t,
                                                                             std::size_t self) {
                    // out_ab = s_a B_ab s_b with s = d^{-1/2}, d = B 1. Differentiating
                    // through s_i gives a per-row correction shared by every j.
                    const Matrix& g = t.grad(self);
                    const Matrix gb = g.cwiseProduct(b);
                    const Eigen::VectorXd u = gb * s;                // sum_b G_ib B_ib s_b
                    const Eigen::VectorXd v = gb.transpose() * s;    // sum_a G_ai B_ai s_a
                    const Eigen::VectorXd corr =
                        (-0.5 * d.array().pow(-1.5) * (u + v).array()).matrix();
                    Matrix ga = s.asDiagonal() * g * s.asDiagonal();
                    ga.colwise() += corr;
                    t.accumulate(ia, ga);
                  });
}

Var straight_through(const Matrix& hard, Var soft) {
  Tape& t = tape_of(soft);
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
    throw std::invalid_argument("ad::straight_through: shape mismatch");
  }
  const auto is = soft.id();
  return t.record(hard, t.needs_grad(is),
                  [is](Tape& t, std::size_t self) { t.accumulate(is, t.grad(self)); });
}

}  // namespace asgn::ad
