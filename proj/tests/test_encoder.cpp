// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Eigenvalues>
#include <numeric>
#include <random>

#include "doctest.h"

#include "asgn/encoder.hpp"
#include "asgn/noise.hpp"
#include "oracles.hpp"

using namespace asgn;
using namespace asgn::encoder;

namespace {

Matrix random_adjacency(SeededNoise& rng, int n, double density) {
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < density) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

Matrix random_matrix(SeededNoise& rng, int r, int c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("encoder worked examples agree with the oracles") {
  for (const auto& c : oracle::worked_examples()) {
    if (c.name.rfind("encoder:", 0) != 0) continue;
    INFO(c.name << ": " << c.detail);
    CHECK(c.pass);
  }
}

TEST_CASE("normalised adjacency is symmetric with spectrum in [-1, 1] and top eigenvalue 1") {
  SeededNoise rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 9;
    const Matrix a = random_adjacency(rng, n, 0.4);
    const Matrix t = normalize_adjacency(a);
    CHECK((t - t.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(t);
    const auto ev = es.eigenvalues();
    CHECK(ev.minCoeff() >= -1.0 - 1e-12);
    CHECK(ev.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalisation rejects asymmetric, self-looped or non-square input") {
  Matrix asym = Matrix::Zero(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(normalize_adjacency(asym), std::invalid_argument);
  Matrix loop = Matrix::Zero(2, 2);
  loop(1, 1) = 1.0;
  CHECK_THROWS_AS(normalize_adjacency(loop), std::invalid_argument);
  CHECK_THROWS_AS(normalize_adjacency(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("isolated nodes keep their own features through normalisation") {
  const Matrix t = normalize_adjacency(Matrix::Zero(3, 3));
  CHECK(t == Matrix::Identity(3, 3));
}

TEST_CASE("GCN and readout are permutation equivariant") {
  SeededNoise rng(13);
  const int n = 7, d = 5;
  const Matrix a = random_adjacency(rng, n, 0.5);
  const Matrix h = random_matrix(rng, n, d);
  const std::vector<Matrix> w{random_matrix(rng, d, d), random_matrix(rng, d, d)};
  const Matrix wr = random_matrix(rng, 3 * d, d);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937(5));
  Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
  for (int i = 0; i < n; ++i) p.indices()[i] = idx[static_cast<std::size_t>(i)];

  auto run = [&](const Matrix& adj, const Matrix& x) {
    ad::Tape tape;
    std::vector<Var> wv;
    for (const auto& m : w) wv.push_back(tape.constant(m));
    const auto layers =
        gcn_forward(tape.constant(x), tape.constant(normalize_adjacency(adj)), wv);
    CHECK(layers.size() == 3);
    return Matrix(skip_readout_all(layers, tape.constant(wr)).value());
  };
  const Matrix base = run(a, h);
  const Matrix perm = run(p * a * p.transpose(), p * h);
  CHECK((perm - p * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single-node readout equals the row of the batched readout") {
  SeededNoise rng(14);
  ad::Tape tape;
  const int n = 4, d = 3;
  const Var x = tape.constant(random_matrix(rng, n, d));
  const Var a = tape.constant(normalize_adjacency(random_adjacency(rng, n, 0.6)));
  const Var w0 = tape.constant(random_matrix(rng, d, d));
  const Var wr = tape.constant(random_matrix(rng, 2 * d, d));
  const Var ws[] = {w0};
  const auto layers = gcn_forward(x, a, ws);
  const Matrix all = skip_readout_all(layers, wr).value();
  for (int i = 0; i < n; ++i) {
    CHECK((skip_readout(layers, i, wr).value() - all.row(i)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("GRU with a saturated update gate carries the state unchanged") {
  ad::Tape tape;
  const int d = 2;
  GruParams p;
  p.w_x = tape.constant(Matrix::Zero(d, 3 * d));
  p.w_h = tape.constant(Matrix::Zero(d, 3 * d));
  Matrix bx = Matrix::Zero(1, 3 * d);
  bx.block(0, d, 1, d).setConstant(50.0);  // update gate -> 1
  p.b_x = tape.constant(bx);
  p.b_h = tape.constant(Matrix::Zero(1, 3 * d));
  Matrix h0(1, d);
  h0 << 0.3, -0.7;
  const Matrix h1 = gru_step(tape.constant(Matrix::Ones(1, d)), tape.constant(h0), p).value();
  CHECK((h1 - h0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(gru_aggregate({}, p));
}

TEST_CASE("GRU aggregation equals repeated steps from a zero state") {
  SeededNoise rng(15);
  ad::Tape tape;
  const int d = 3;
  GruParams p{tape.constant(random_matrix(rng, d, 3 * d)), tape.constant(random_matrix(rng, d, 3 * d)),
              tape.constant(random_matrix(rng, 1, 3 * d)), tape.constant(random_matrix(rng, 1, 3 * d))};
  std::vector<Var> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(tape.constant(random_matrix(rng, 1, d)));
  Var h = tape.constant(Matrix::Zero(1, d));
  for (const Var& x : seq) h = gru_step(x, h, p);
  CHECK((gru_aggregate(seq, p).value() - h.value()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(h.value().cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("encoder base cases") {
  CHECK(normalize_adjacency(Matrix::Zero(1, 1)) == Matrix::Ones(1, 1));

  ad::Tape tape;
  SeededNoise rng(40);
  Matrix h0 = random_matrix(rng, 3, 3).cwiseAbs();
  const Var x = tape.constant(h0);
  const Var eye = tape.constant(Matrix::Identity(3, 3));
  const Var w[] = {eye};
  const auto one = gcn_forward(x, eye, w);
  CHECK(one[1].value() == h0);
  const auto none = gcn_forward(x, eye, {});
  REQUIRE(none.size() == 1);
  CHECK(none[0].value() == h0);
  CHECK(skip_readout_all(none, eye).value() == h0);
  const Var zeros = tape.constant(Matrix::Zero(3, 3));
  const Var zl[] = {zeros, zeros};
  CHECK(skip_readout_all(zl, tape.constant(random_matrix(rng, 6, 3))).value().isZero());
}

TEST_CASE("GRU base cases") {
  ad::Tape tape;
  SeededNoise rng(41);
  const int d = 3;
  GruParams p{tape.constant(random_matrix(rng, d, 3 * d)), tape.constant(random_matrix(rng, d, 3 * d)),
              tape.constant(random_matrix(rng, 1, 3 * d)), tape.constant(random_matrix(rng, 1, 3 * d))};
  const Var x = tape.constant(random_matrix(rng, 1, d));
  const Var seq[] = {x};
  CHECK(gru_aggregate(seq, p).value() == gru_step(x, tape.constant(Matrix::Zero(1, d)), p).value());

  GruParams zero{tape.constant(Matrix::Zero(d, 3 * d)), tape.constant(Matrix::Zero(d, 3 * d)),
                 tape.constant(Matrix::Zero(1, 3 * d)), tape.constant(Matrix::Zero(1, 3 * d))};
  const Var z = tape.constant(Matrix::Zero(1, d));
  const Var zs[] = {z, z, z};
  CHECK(gru_aggregate(zs, zero).value().isZero());
}
