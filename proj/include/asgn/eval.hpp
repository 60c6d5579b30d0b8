// SPDX-License-Identifier: Apache-2.0
//
// Metrics, variability-index stratification, the three-way ablation and
// hyperparameter sweeps. All metrics are computed in physical units.
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "asgn/graphbuild.hpp"
#include "asgn/training.hpp"

namespace asgn::eval {

using model::Matrix;

struct VariableMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> r2;  // empty when the truth has zero variance
};

/// Column-wise metrics of `pred` against `truth` (rows = samples). Throws
/// std::invalid_argument on a shape mismatch or no rows.
std::vector<VariableMetrics> metrics(const Matrix& pred, const Matrix& truth);

/// Population standard deviation of the first `length` values. Throws
/// std::invalid_argument when the series is shorter.
double variability_index(std::span<const double> series, int length = 24);

enum class Group { kNone, kLow, kHigh };
std::string to_string(Group g);

/// Bottom floor(n/4) by (vi, id) are low, top floor(n/4) are high. `ids`
/// defaults to the positions. Throws std::invalid_argument for n < 4.
std::vector<Group> stratify_nodes(std::span<const double> vi, std::span<const NodeId> ids = {});

/// Model (or baseline) outputs over a set of windows, z-scored and physical.
struct Predictions {
  std::vector<WindowKey> keys;
  Matrix pred, truth, persistence;  // physical units, rows aligned with keys
};

enum class Baseline { kNone, kPersistence, kFixedGraph };
std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& s);

/// Deterministic (zero-noise) forecasts for every window of `split`.
Predictions predict(const Dataset& ds, const DatasetGraphs& graphs,
                    const training::ModelParams& params, const training::TrainConfig& cfg,
                    Split split);

struct EvalOptions {
  int vi_length = 24;
  int vi_variable = 2;  // T
};

struct GroupStats {
  std::size_t nodes = 0;
  std::array<double, kNumVariables> mae{};
};

struct MetricsReport {
  std::string split;
  std::size_t windows = 0;
  std::vector<VariableMetrics> model;        // what was evaluated
  std::vector<VariableMetrics> persistence;  // x_t as forecast of x_t+1
  // Stratification (absent when the dataset is shorter than vi_length).
  bool stratified = false;
  int vi_variable = 2;
  int vi_length = 24;
  std::vector<NodeId> nodes;
  std::vector<std::array<double, kNumVariables>> node_mae;
  std::vector<double> node_vi;
  std::vector<Group> node_group;
  GroupStats low, high, none;
};

/// Metrics and VI-stratified MAE of the given predictions. VI uses the
/// ground truth of each grid node over the last `vi_length` steps.
MetricsReport report(const Dataset& ds, const Predictions& p, Split split,
                     const EvalOptions& opt = {});

/// Mean over variables of (MAE_high - MAE_low) / stddev, i.e. z-score units.
double stratified_gap(const MetricsReport& r, const Normalization& norm);
/// Mean R^2 over variables (undefined entries are skipped).
double mean_r2(const std::vector<VariableMetrics>& m);

nlohmann::json to_json(const MetricsReport& r, const std::string& evaluated);
void write_stratified_csv(const MetricsReport& r, const std::filesystem::path& path);

// ---- experiments ----------------------------------------------------------------------

struct ExperimentOptions {
  /// Pretraining epochs before each fine-tune (0 skips pretraining).
  int pretrain_epochs = 0;
  EvalOptions eval;
  /// Progress callback, e.g. for logging.
  std::function<void(const std::string&)> log;
};

/// Trains (optionally pretrain then finetune) and evaluates on the test split.
struct RunOutcome {
  training::FitResult fit;
  MetricsReport test;
};
RunOutcome train_and_evaluate(const Dataset& ds, const training::TrainConfig& cfg,
                              const ExperimentOptions& opt = {});

struct AblationRow {
  model::Variant variant;
  std::array<double, kNumVariables> r2{};      // mean over seeds
  std::array<double, kNumVariables> r2_std{};  // population std over seeds
  double gap = 0.0;                            // mean stratified_gap over seeds
  std::vector<RunOutcome> runs;
};

/// Rows in order: full, no-distance, fixed-graph.
std::vector<AblationRow> run_ablation(const Dataset& ds, const training::TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      const ExperimentOptions& opt = {});
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

struct SweepPoint {
  std::string param;
  double value = 0.0;
  double mean_r2 = 0.0;  // over seeds of the variable-averaged test R^2
  double std_r2 = 0.0;   // population std over seeds
};

/// `param` is "tau" or "hidden".
std::vector<SweepPoint> run_sensitivity(const Dataset& ds, const training::TrainConfig& base,
                                        const std::string& param, std::span<const double> values,
                                        std::span<const std::uint64_t> seeds,
                                        const ExperimentOptions& opt = {});
void write_sweep_csv(const std::vector<SweepPoint>& pts, const std::filesystem::path& path);
/// Line chart of mean R^2 with a shaded +-std band, one panel per param.
std::string sweep_svg(const std::vector<SweepPoint>& pts);

}  // namespace asgn::eval
