// SPDX-License-Identifier: Apache-2.0
//
// The full forecaster: per-step structure learning and GCN over a window of
// subgraphs, GRU over the target's readouts, and linear heads. Parameters
// live in a flat, named list so checkpoints and optimizers can walk them in
// a fixed order.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgn/autodiff.hpp"
#include "asgn/datamodel.hpp"
#include "asgn/encoder.hpp"
#include "asgn/noise.hpp"
#include "asgn/structlearn.hpp"

namespace asgn::model {

using ad::Matrix;
using ad::Var;

struct ModelShape {
  int variables = kNumVariables;
  int hidden = 32;       // d', shared by embeddings, GCN, readout and GRU
  int platforms = 6;
  int gcn_layers = 3;
  int score_hidden = 16;  // h_c
  int dist_hidden = 8;    // h_d
  bool operator==(const ModelShape&) const = default;
};

nlohmann::json to_json(const ModelShape& s);
ModelShape shape_from_json(const nlohmann::json& j);

enum class Variant { kFull, kNoDistance, kFixedGraph };
enum class Phase { kPretrain, kFinetune };

std::string to_string(Variant v);
std::string to_string(Phase p);
/// Accepts "full", "no-distance", "fixed-graph"; throws std::invalid_argument.
Variant variant_from_string(const std::string& s);
/// Accepts "pretrain", "finetune"; throws std::invalid_argument.
Phase phase_from_string(const std::string& s);

struct Tensor {
  std::string name;
  Matrix value;
};

class ModelParams {
 public:
  ModelParams() = default;
  /// Glorot-uniform weights, zero biases.
  static ModelParams init(const ModelShape& shape, std::uint64_t seed);
  /// Same names and shapes, all zeros.
  static ModelParams zeros(const ModelShape& shape);

  const ModelShape& shape() const { return shape_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  /// Throws std::out_of_range for an unknown name.
  std::size_t index(const std::string& name) const;
  Matrix& at(const std::string& name) { return tensors_[index(name)].value; }
  const Matrix& at(const std::string& name) const { return tensors_[index(name)].value; }
  std::size_t scalar_count() const;

 private:
  ModelShape shape_;
  std::vector<Tensor> tensors_;
};

/// score.* and degree.*: the tensors `--freeze-structure` holds fixed.
bool is_structure_tensor(const std::string& name);
/// Whether a tensor takes part in the forward pass of this variant and phase.
bool is_used(const std::string& name, Variant v, Phase p);

/// Parameters recorded on a tape. Tensors flagged as not trainable are bound
/// as constants.
struct Bound {
  std::vector<Var> vars;  // aligned with ModelParams::tensors()
  structlearn::ProjectionParams proj;
  structlearn::ScoreParams score;
  structlearn::DegreeParams degree;
  std::vector<Var> gcn;
  Var readout;
  encoder::GruParams gru;
  Var fine_w, fine_b;
  Var pre_grid_w, pre_grid_b;
  std::vector<Var> pre_obs_w, pre_obs_b;
};

Bound bind(ad::Tape& tape, const ModelParams& params, const std::vector<bool>& trainable);

struct ForwardConfig {
  Variant variant = Variant::kFull;
  double tau = 0.5;
  structlearn::AdjacencyOptions adjacency;
  double distance_scale_km = 50.0;
  /// Weight of KL(N(mu, sigma) || N(0, 1)) on the degree encoder; 0 disables.
  double kl_weight = 0.0;
};

/// Normalised adjacency of one step: learned for kFull / kNoDistance, the
/// fixed radius graph for kFixedGraph (no structure-learning op is invoked).
/// `kl` receives the mean KL term when requested and the variant learns.
struct StepGraph {
  Var embeddings;
  Var a_tilde;
  Matrix hard;  // 0/1 adjacency without self loops
  Var kl;       // 1 x 1, invalid unless computed
};
StepGraph step_graph(const Bound& b, const LocalSubgraph& g, const ForwardConfig& cfg,
                     NoiseSource& noise);

struct WindowForward {
  Var prediction;                  // 1 x C, z-scored
  std::vector<Matrix> adjacency;   // hard adjacency per step
  Var kl;                          // summed over steps, invalid if unused
};

/// z = GRU(readout_target(t-m+1), ..., readout_target(t)); prediction = z W + b.
WindowForward forecast(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise);

struct Loss {
  Var total;          // data + l2 + kl
  double data = 0.0;
  double l2 = 0.0;
};

/// lambda * sum of squares over every tensor used in (variant, phase).
Var l2_penalty(const Bound& b, const ModelParams& params, Variant v, Phase p, double lambda);

/// Mean |prediction - label| over the C variables. Throws
/// std::invalid_argument when the window has no label.
Var finetune_data_loss(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise, Var* kl = nullptr);

/// Masked L1 reconstruction of every node at every step of the window, with
/// one head for grid rows and one per platform. Each step runs one GRU update
/// from a zero state over all node readouts.
Var pretrain_data_loss(const Bound& b, const SubgraphWindow& w, const ForwardConfig& cfg,
                       NoiseSource& noise, Var* kl = nullptr);

Loss window_loss(const Bound& b, const ModelParams& params, const SubgraphWindow& w,
                 Phase phase, const ForwardConfig& cfg, double lambda, NoiseSource& noise);

}  // namespace asgn::model
