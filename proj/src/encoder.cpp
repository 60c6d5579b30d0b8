// SPDX-License-Identifier: Apache-2.0
#include "asgn/encoder.hpp"

#include <stdexcept>
#include <string>

namespace asgn::encoder {

Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("normalize_adjacency: not square");
  if (!a.isApprox(a.transpose(), 0.0) && (a - a.transpose()).cwiseAbs().maxCoeff() > 0.0) {
    throw std::invalid_argument("normalize_adjacency: input is not symmetric");
  }
  if (a.rows() > 0 && a.diagonal().cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("normalize_adjacency: non-zero diagonal");
  }
  const auto n = a.rows();
  const Matrix b = a + Matrix::Identity(n, n);
  const Eigen::VectorXd s = b.rowwise().sum().array().rsqrt();
  return s.asDiagonal() * b * s.asDiagonal();
}

std::vector<Var> gcn_forward(Var h0, Var a_tilde, std::span<const Var> weights) {
  if (a_tilde.rows() != a_tilde.cols() || a_tilde.rows() != h0.rows()) {
    throw std::invalid_argument("gcn_forward: adjacency is " + std::to_string(a_tilde.rows()) +
                                "x" + std::to_string(a_tilde.cols()) + " but H0 has " +
                                std::to_string(h0.rows()) + " rows");
  }
  std::vector<Var> layers{h0};
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Var& h = layers.back();
    if (h.cols() != weights[l].rows()) {
      throw std::invalid_argument("gcn_forward: layer " + std::to_string(l) + " expects width " +
                                  std::to_string(weights[l].rows()) + ", got " +
                                  std::to_string(h.cols()));
    }
    layers.push_back(ad::relu(ad::matmul(ad::matmul(a_tilde, h), weights[l])));
  }
  return layers;
}

Var skip_readout(std::span<const Var> layers, int row, Var w_r) {
  std::vector<Var> rows;
  rows.reserve(layers.size());
  const int idx[] = {row};
  for (const Var& h : layers) rows.push_back(ad::gather_rows(h, idx));
  return ad::matmul(ad::concat_cols(rows), w_r);
}

Var skip_readout_all(std::span<const Var> layers, Var w_r) {
  return ad::matmul(ad::concat_cols(layers), w_r);
}

Var gru_step(Var x, Var h, const GruParams& p) {
  const auto hidden = h.cols();
  const Var gx = ad::add_row(ad::matmul(x, p.w_x), p.b_x);
  const Var gh = ad::add_row(ad::matmul(h, p.w_h), p.b_h);
  const Var r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, hidden), ad::slice_cols(gh, 0, hidden)));
  const Var u = ad::sigmoid(
      ad::add(ad::slice_cols(gx, hidden, hidden), ad::slice_cols(gh, hidden, hidden)));
  const Var c = ad::tanh(ad::add(ad::slice_cols(gx, 2 * hidden, hidden),
                                 ad::hadamard(r, ad::slice_cols(gh, 2 * hidden, hidden))));
  return ad::add(ad::hadamard(ad::one_minus(u), c), ad::hadamard(u, h));
}

Var gru_aggregate(std::span<const Var> sequence, const GruParams& p) {
  if (sequence.empty()) throw std::invalid_argument("gru_aggregate: empty sequence");
  ad::Tape& tape = *sequence.front().tape();
  Var h = tape.constant(Matrix::Zero(sequence.front().rows(), p.w_h.rows()));
  for (const Var& x : sequence) h = gru_step(x, h, p);
  return h;
}

}  // namespace asgn::encoder
