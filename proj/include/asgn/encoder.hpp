// SPDX-License-Identifier: Apache-2.0
//
// Spatial GCN with skip readout and GRU temporal aggregation.
//
// Conventions: node features are rows, so a layer is
//   H^(l+1) = relu(A_tilde H^(l) W^(l))
// and a readout is h = (h^(0) || ... || h^(L)) W_r.
#pragma once

#include <span>
#include <vector>

#include "asgn/autodiff.hpp"

namespace asgn::encoder {

using ad::Matrix;
using ad::Var;

/// D^{-1/2} (A + I) D^{-1/2}. Requires a square, symmetric matrix with zero
/// diagonal; throws std::invalid_argument otherwise.
Matrix normalize_adjacency(const Matrix& a);

/// Returns [H^(0), ..., H^(L)] with L = weights.size().
std::vector<Var> gcn_forward(Var h0, Var a_tilde, std::span<const Var> weights);

/// Readout of one node: its row from every layer, concatenated, times W_r.
Var skip_readout(std::span<const Var> layers, int row, Var w_r);
/// Readout of every node at once (n x hidden).
Var skip_readout_all(std::span<const Var> layers, Var w_r);

/// Gate order along the 3h columns: reset, update, candidate.
struct GruParams {
  Var w_x, w_h;  // in x 3h, h x 3h
  Var b_x, b_h;  // 1 x 3h
};

/// One GRU step for a batch of rows:
///   r = s(x Wxr + bxr + h Whr + bhr), u = s(x Wxu + bxu + h Whu + bhu)
///   c = tanh(x Wxc + bxc + r * (h Whc + bhc)), h' = (1 - u) * c + u * h
Var gru_step(Var x, Var h, const GruParams& p);

/// Runs the recurrence from a zero state over `sequence` (each 1 x in) and
/// returns the final hidden state. Throws on an empty sequence.
Var gru_aggregate(std::span<const Var> sequence, const GruParams& p);

}  // namespace asgn::encoder
