// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every intermediate value together with a backward closure.
// Calling Tape::backward(root) seeds d(root)/d(root) = 1 and walks the record
// in reverse creation order. Each op's local derivative is written by hand
// below; the test suite checks every op against central differences.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace asgn::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf that accumulates a gradient.
  Var variable(Matrix value);
  /// Records the result of an op. `needs_grad` should be true iff any input
  /// needs a gradient; otherwise `backward` is dropped.
  Var record(Matrix value, bool needs_grad, Backward backward);

  /// Reverse sweep from a 1x1 root.
  void backward(Var root);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient slot; zero-sized until something flows into it.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Adds `delta` into the gradient slot of `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& delta);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  // deque keeps references to earlier values stable while recording.
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

// ---- elementwise / linear algebra -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Elementwise product with a constant matrix.
Var mask(Var a, const Matrix& m);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var log(Var a);
Var abs(Var a);

/// 1 - a.
Var one_minus(Var a);

// ---- reductions ---------------------------------------------------------------

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
/// n x 1 column of row sums.
Var row_sums(Var a);

// ---- shape ----------------------------------------------------------------------

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> rows);
/// out(i, 0) = a(index[i], col).
Var gather_entries(Var a, std::span<const int> index, Eigen::Index col = 0);
/// Builds an n x n matrix with out(rows[p], cols[p]) += values(p, 0).
Var scatter_pairs(Var values, std::span<const int> rows, std::span<const int> cols,
                  Eigen::Index n);

// ---- graph-specific -------------------------------------------------------------

/// Softmax over contiguous segments of a column vector. Segment s covers
/// rows [offsets[s], offsets[s+1]).
Var segment_softmax(Var logits, std::span<const int> offsets);

/// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
Var gcn_normalize(Var adjacency);

/// Forward value is `hard`; the backward pass routes the incoming gradient
/// unchanged into `soft`.
Var straight_through(const Matrix& hard, Var soft);

}  // namespace asgn::ad
