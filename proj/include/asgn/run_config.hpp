// SPDX-License-Identifier: Apache-2.0
//
// One declarative config file for every subcommand:
//   {"sim": {...}, "train": {...}, "eval": {...}}
// Sections are optional; unknown keys anywhere are rejected.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "asgn/eval.hpp"
#include "asgn/synthgen.hpp"
#include "asgn/training.hpp"

namespace asgn {

struct EvalSection {
  int vi_length = 24;
  int vi_variable = 2;  // index into U, V, T, Q
  int pretrain_epochs = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> sweep_tau{0.1, 0.3, 0.5, 1.0, 2.0};
  std::vector<double> sweep_hidden{8, 16, 32, 64, 128};
  bool operator==(const EvalSection&) const = default;
};

struct RunConfig {
  SimConfig sim;
  training::TrainConfig train;
  EvalSection eval;
  bool operator==(const RunConfig&) const = default;

  eval::EvalOptions eval_options() const { return {eval.vi_length, eval.vi_variable}; }
};

/// Throws ConfigError naming the offending key.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);
/// Pretty-printed, trailing newline.
void write_resolved_config(const RunConfig& c, const std::filesystem::path& path);

}  // namespace asgn
