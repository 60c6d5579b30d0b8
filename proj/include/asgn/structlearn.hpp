// SPDX-License-Identifier: Apache-2.0
//
// Differentiable graph structure learning for one subgraph snapshot:
//
//   node features --project--> embeddings --score--> edge probabilities p
//   p --Gumbel-Softmax--> soft samples e_hat --+--> hard top-K adjacency
//   embeddings --(mu, sigma, eps)--> degree k -+
//
// Every op records onto an ad::Tape. Noise comes from a NoiseSource so a pass
// can be replayed exactly.
#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "asgn/autodiff.hpp"
#include "asgn/datamodel.hpp"
#include "asgn/noise.hpp"

namespace asgn::structlearn {

using ad::Matrix;
using ad::Var;

/// Number of structure-learning op invocations since process start.
std::uint64_t call_count();

// ---- feature projection -----------------------------------------------------------

struct ProjectionParams {
  Var grid_w, grid_b;              // C x d', 1 x d'
  std::vector<Var> obs_w, obs_b;   // one encoder per platform
};

/// Per-node embeddings of one snapshot in local-id order. Observation
/// channels are masked before the affine map.
struct EmbeddingBatch {
  Var rows;                     // n x d'
  std::vector<NodeKind> kind;   // per row
};

/// Throws std::invalid_argument naming the platform on width mismatch.
EmbeddingBatch project_features(const LocalSubgraph& g, const ProjectionParams& p);
/// The same map without bumping call_count(); the fixed-graph baseline shares
/// the input encoders but must not count as structure learning.
EmbeddingBatch project_features_uncounted(const LocalSubgraph& g, const ProjectionParams& p);

// ---- candidates ---------------------------------------------------------------------

/// Scoring candidates of every node: itself followed by its initial 1-hop
/// neighbours in ascending local index. Node i owns pairs
/// [offsets[i], offsets[i+1]); the first of them is the self pair.
struct CandidateSet {
  int nodes = 0;
  std::vector<int> src, dst;
  std::vector<double> km;
  std::vector<int> offsets;

  int neighbor_count(int i) const { return offsets[i + 1] - offsets[i] - 1; }
  std::size_t pairs() const { return src.size(); }
};

CandidateSet build_candidates(const LocalSubgraph& g);
CandidateSet build_candidates(int n, std::span<const std::pair<int, int>> edges,
                              std::span<const double> km);

// ---- scoring ------------------------------------------------------------------------

struct ScoreParams {
  Var wc1, wc2;  // d' x h_c each
  Var wd;        // 1 x h_d
  Var wp, bp;    // (2 h_c + h_d) x 1, 1 x 1
};

struct ScoreOptions {
  bool use_distance = true;
  /// Distances are divided by this before entering W_d.
  double distance_scale_km = 50.0;
};

/// p_ij = sigmoid(FC_p(sigmoid(x_i W_c1 || x_j W_c2) || sigmoid(d_ij W_d))) per
/// candidate pair, as a P x 1 column. Without distance the d-block is dropped
/// and only the first 2 h_c rows of W_p are used.
Var score_edges(Var emb, const CandidateSet& cands, const ScoreParams& p,
                const ScoreOptions& opt = {});

// ---- Gumbel-Softmax -----------------------------------------------------------------

/// e_j = exp((log p_j + g_j) / tau) / sum_j exp((log p_j + g_j) / tau).
std::vector<double> gumbel_softmax_sample(std::span<const double> p_row, double tau,
                                          NoiseSource& noise);
/// Same, over every candidate segment of a tape column.
Var gumbel_softmax(Var p, std::span<const int> offsets, double tau, NoiseSource& noise);

// ---- adaptive degree ------------------------------------------------------------------

struct DegreeParams {
  Var w_mu, b_mu;        // d' x d', 1 x d'
  Var w_sigma, b_sigma;  // d' x d', 1 x d'
  Var w_k, b_k;          // (d' + 1) x 1, 1 x 1
};

struct DegreeEstimate {
  Var k;                     // n x 1 continuous degrees
  std::vector<int> K;        // integer degrees per node
  Var mu, sigma;             // n x d' reparameterisation terms
};

/// Round half away from zero, then clamp into [1, candidate_count]
/// (0 when the node has no neighbours).
int integer_degree(double k, int candidate_count);

/// mu = FC_mu(x), sigma = softplus(FC_sigma(x)), z = mu + eps * sigma,
/// k = FC_k(z || m) where m is the soft-sample mass off the self pair.
DegreeEstimate estimate_degree(Var emb, Var e_hat, const CandidateSet& cands,
                               const DegreeParams& p, NoiseSource& noise);

// ---- adjacency ------------------------------------------------------------------------

struct AdjacencyOptions {
  /// Forward uses the hard 0/1 matrix (straight-through); false runs the
  /// smooth relaxation forward as well.
  bool hard = true;
  /// OR-symmetrise after per-node top-K.
  bool symmetrize = true;
  /// Softness of the pairwise rank comparison.
  double rank_temperature = 0.05;
  /// Softness of the rank-vs-degree cutoff.
  double degree_temperature = 0.5;
};

struct AdjacencySample {
  Var probabilities;   // p, P x 1
  Var soft_samples;    // e_hat, P x 1
  Var degrees;         // k, n x 1
  std::vector<int> K;
  Matrix hard;         // A_hat, n x n, zero diagonal
  Var soft;            // relaxed adjacency the gradient flows through
  Var adjacency;       // what the encoder consumes
};

/// Per-node top-K picks by e_hat (ties to the lower local index), excluding
/// the self pair.
Matrix top_k_adjacency(std::span<const double> e_hat, const CandidateSet& cands,
                       std::span<const int> K, bool symmetrize);

/// Smooth membership of each candidate in its node's top-k, P x 1 with zero on
/// self pairs: sigmoid((k_i + 1/2 - softrank_j) / degree_temperature), where
/// softrank_j = 1 + sum_{l != j} sigmoid((e_l - e_j) / rank_temperature).
Var soft_top_k(Var e_hat, Var k, const CandidateSet& cands, const AdjacencyOptions& opt);

/// Builds A_hat from soft samples and degrees, wiring the straight-through
/// gradient path when opt.hard is set.
AdjacencySample build_adaptive_adjacency(Var e_hat, const DegreeEstimate& degree,
                                         const CandidateSet& cands,
                                         const AdjacencyOptions& opt);

}  // namespace asgn::structlearn
