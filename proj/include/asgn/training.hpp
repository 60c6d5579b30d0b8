// SPDX-License-Identifier: Apache-2.0
//
// Two-phase optimisation (reconstruction pretraining, then forecasting
// fine-tuning), checkpoints and deterministic replay.
//
// Every stochastic draw during training is seeded from (cfg.seed, epoch,
// window slot), and per-window gradients are reduced in slot order, so a run
// is bit-reproducible regardless of the worker count.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgn/graphbuild.hpp"
#include "asgn/model.hpp"
#include "asgn/synthgen.hpp"

namespace asgn::training {

using model::ModelParams;
using model::Phase;
using model::Variant;

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  Phase phase = Phase::kFinetune;
  Variant variant = Variant::kFull;
  int epochs = 30;
  double lr = 3e-3;
  double lambda = 1e-6;           // L2 weight
  double tau = 0.5;
  int hidden = 32;
  int window = 8;                 // m
  int khop = 3;                   // k
  double radius_km = 50.0;
  int batch = 16;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kAdam;
  double clip_norm = 5.0;         // <= 0 disables clipping
  int patience = 8;               // epochs without validation improvement
  int windows_per_epoch = 320;    // 0 = every training window
  int val_windows = 200;          // 0 = every validation window
  bool freeze_structure = false;
  double kl_weight = 0.0;
  int gcn_layers = 3;
  int jobs = 1;
  bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError naming the offending key.
void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
/// Rejects unknown keys; missing keys keep `base` values.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

model::ModelShape shape_for(const TrainConfig& cfg, const SimConfig& sim);
model::ForwardConfig forward_config(const TrainConfig& cfg);

struct OptimizerState {
  Optimizer kind = Optimizer::kAdam;
  std::int64_t step = 0;
  std::vector<model::Matrix> m, v;  // Adam moments, aligned with the params
  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  nlohmann::json config;  // TrainConfig echo
  int epoch = 0;
  std::uint64_t seed = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "ASGN", u32 version, u32 header length, JSON header, f32 LE payloads in
/// header order (params, then optimizer moments).
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Fresh parameters for fine-tuning that reuse every tensor of `pretrained`
/// except the forecasting head. Throws CheckpointError on shape mismatch.
ModelParams handoff(const ModelParams& pretrained, const model::ModelShape& shape,
                    std::uint64_t seed);

// ---- gradients and optimiser ----------------------------------------------------------

/// Loss and per-tensor gradients of one window. Gradients of tensors that are
/// not trainable are zero.
struct WindowGrad {
  double loss = 0.0;
  double data = 0.0;
  std::vector<model::Matrix> grads;
};

std::vector<bool> trainable_mask(const ModelParams& params, const TrainConfig& cfg);

WindowGrad window_gradient(const ModelParams& params, const SubgraphWindow& w,
                           const TrainConfig& cfg, const std::vector<bool>& trainable,
                           NoiseSource& noise);

/// Scales the gradients in place when their global L2 norm exceeds `max_norm`
/// and returns the norm before scaling.
double clip_global_norm(std::vector<model::Matrix>& grads, double max_norm);

/// One update. Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
void apply_update(ModelParams& params, OptimizerState& state,
                  const std::vector<model::Matrix>& grads, const std::vector<bool>& trainable,
                  double lr);

OptimizerState fresh_optimizer(const ModelParams& params, Optimizer kind);

// ---- fit ------------------------------------------------------------------------------

struct EpochLoss {
  int epoch = 0;
  double train = 0.0;  // mean total loss over the epoch's windows
  double val = 0.0;    // mean data loss over the validation windows
};

struct FitResult {
  Checkpoint checkpoint;            // best validation epoch (or last finite one)
  std::vector<EpochLoss> curve;
  bool diverged = false;
  int best_epoch = 0;
};

struct FitOptions {
  /// Starting parameters; a fresh init from cfg.seed when empty.
  std::optional<ModelParams> init;
  /// Called after every epoch.
  std::function<void(const EpochLoss&)> on_epoch;
};

/// Window keys used for training and validation.
std::vector<WindowKey> training_keys(const Dataset& ds, const TrainConfig& cfg);
std::vector<WindowKey> validation_keys(const Dataset& ds, const TrainConfig& cfg);

/// Deterministic validation loss (zero noise) over the given windows.
double evaluate_loss(const ModelParams& params, const DatasetGraphs& graphs,
                     const std::vector<WindowKey>& keys, const TrainConfig& cfg);

FitResult fit(const Dataset& ds, const TrainConfig& cfg, const FitOptions& opt = {});

/// Writes "epoch,train,val" rows with 17 significant digits.
void write_loss_csv(const std::vector<EpochLoss>& curve, const std::filesystem::path& path);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace asgn::training
