// SPDX-License-Identifier: Apache-2.0
#include <functional>
#include <vector>

#include "doctest.h"

#include "asgn/autodiff.hpp"
#include "asgn/noise.hpp"
#include "oracles.hpp"

using namespace asgn;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(SeededNoise& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

/// Builds a scalar from the inputs; a fixed random projection turns a matrix
/// output into a scalar so every output entry is exercised.
using Op = std::function<Var(Tape&, const std::vector<Var>&)>;

double max_gradient_error(const std::vector<Matrix>& inputs, const Op& op) {
  SeededNoise rng(17);
  Matrix probe;
  auto scalar = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.variable(x));
    const Var out = op(tape, vars);
    if (probe.size() == 0) probe = random_matrix(rng, out.rows(), out.cols());
    const Var loss = ad::sum(ad::mask(out, probe));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (std::size_t i = 0; i < vars.size(); ++i) {
        const Matrix& g = vars[i].grad();
        grads->push_back(g.size() ? g : Matrix::Zero(xs[i].rows(), xs[i].cols()));
      }
    }
    return loss.scalar();
  };
  std::vector<Matrix> analytic;
  scalar(inputs, &analytic);
  double worst = 0.0;
  auto xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (Eigen::Index e = 0; e < xs[i].size(); ++e) {
      const double x0 = xs[i].data()[e];
      xs[i].data()[e] = x0 + 1e-5;
      const double up = scalar(xs, nullptr);
      xs[i].data()[e] = x0 - 1e-5;
      const double down = scalar(xs, nullptr);
      xs[i].data()[e] = x0;
      worst = std::max(worst, oracle::relative_error(analytic[i].data()[e], (up - down) / 2e-5));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and linear ops match central differences") {
  SeededNoise rng(1);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4);
  const Matrix c = random_matrix(rng, 4, 2), row = random_matrix(rng, 1, 4);
  const Matrix pos = random_matrix(rng, 3, 4, 0.2, 2.0);
  const Matrix m = random_matrix(rng, 3, 4);

  CHECK(max_gradient_error({a, b}, [](Tape&, auto v) { return ad::add(v[0], v[1]); }) < 1e-7);
  CHECK(max_gradient_error({a, b}, [](Tape&, auto v) { return ad::sub(v[0], v[1]); }) < 1e-7);
  CHECK(max_gradient_error({a, b}, [](Tape&, auto v) { return ad::hadamard(v[0], v[1]); }) < 1e-7);
  CHECK(max_gradient_error({a, row}, [](Tape&, auto v) { return ad::add_row(v[0], v[1]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::add_scalar(v[0], 0.3); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::scale(v[0], -1.7); }) < 1e-7);
  CHECK(max_gradient_error({a, c}, [](Tape&, auto v) { return ad::matmul(v[0], v[1]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::transpose(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [&](Tape&, auto v) { return ad::mask(v[0], m); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::sigmoid(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::tanh(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::relu(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::softplus(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({pos}, [](Tape&, auto v) { return ad::log(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::abs(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::one_minus(v[0]); }) < 1e-7);
}

TEST_CASE("reductions and shape ops match central differences") {
  SeededNoise rng(2);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 2);
  const Matrix r = random_matrix(rng, 2, 4);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::sum(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::mean(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::sum_squares(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::row_sums(v[0]); }) < 1e-7);
  CHECK(max_gradient_error({a, b}, [](Tape&, auto v) {
          const Var p[] = {v[0], v[1]};
          return ad::concat_cols(p);
        }) < 1e-7);
  CHECK(max_gradient_error({a, r}, [](Tape&, auto v) {
          const Var p[] = {v[0], v[1]};
          return ad::concat_rows(p);
        }) < 1e-7);
  CHECK(max_gradient_error({a}, [](Tape&, auto v) { return ad::slice_cols(v[0], 1, 2); }) < 1e-7);
  const std::vector<int> rows{2, 0, 2, 1};
  CHECK(max_gradient_error({a}, [&](Tape&, auto v) { return ad::gather_rows(v[0], rows); }) < 1e-7);
  CHECK(max_gradient_error({a}, [&](Tape&, auto v) { return ad::gather_entries(v[0], rows, 3); }) <
        1e-7);
  const std::vector<int> pr{0, 1, 1, 2}, pc{1, 0, 2, 2};
  const Matrix vals = random_matrix(rng, 4, 1);
  CHECK(max_gradient_error({vals}, [&](Tape&, auto v) { return ad::scatter_pairs(v[0], pr, pc, 3); }) <
        1e-7);
}

TEST_CASE("graph ops match central differences") {
  SeededNoise rng(3);
  const Matrix logits = random_matrix(rng, 7, 1, -2.0, 2.0);
  const std::vector<int> offsets{0, 1, 4, 7};
  CHECK(max_gradient_error({logits}, [&](Tape&, auto v) { return ad::segment_softmax(v[0], offsets); }) <
        1e-7);
  Matrix adj = random_matrix(rng, 4, 4, 0.0, 1.0);
  adj = (0.5 * (adj + adj.transpose())).eval();
  adj.diagonal().setZero();
  CHECK(max_gradient_error({adj}, [](Tape&, auto v) { return ad::gcn_normalize(v[0]); }) < 1e-6);
}

TEST_CASE("segment softmax sums to one per segment") {
  Tape tape;
  SeededNoise rng(4);
  const Var x = tape.constant(random_matrix(rng, 6, 1, -5.0, 5.0));
  const std::vector<int> offsets{0, 2, 3, 6};
  const Matrix y = ad::segment_softmax(x, offsets).value();
  CHECK(y(0, 0) + y(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(y(2, 0) == doctest::Approx(1.0));
  CHECK(y(3, 0) + y(4, 0) + y(5, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("straight-through passes the hard value forward and the gradient to the soft input") {
  Tape tape;
  Matrix soft(2, 2), hard(2, 2);
  soft << 0.2, 0.7, 0.4, 0.1;
  hard << 0, 1, 1, 0;
  const Var s = tape.variable(soft);
  const Var st = ad::straight_through(hard, s);
  CHECK(st.value() == hard);
  Matrix w(2, 2);
  w << 1, 2, 3, 4;
  tape.backward(ad::sum(ad::mask(st, w)));
  CHECK(s.grad() == w);
}

TEST_CASE("constants receive no gradient and unused variables stay zero") {
  Tape tape;
  const Var a = tape.variable(Matrix::Constant(2, 2, 1.5));
  const Var b = tape.constant(Matrix::Constant(2, 2, 2.0));
  const Var unused = tape.variable(Matrix::Constant(1, 1, 3.0));
  tape.backward(ad::sum(ad::hadamard(a, b)));
  CHECK(a.grad() == Matrix::Constant(2, 2, 2.0));
  CHECK(b.grad().size() == 0);
  CHECK(unused.grad().size() == 0);
}
