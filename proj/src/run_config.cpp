// SPDX-License-Identifier: Apache-2.0
#include "asgn/run_config.hpp"

#include <fstream>

#include "asgn/json_util.hpp"

namespace asgn {

using nlohmann::json;

namespace {

EvalSection eval_from_json(const json& j) {
  const std::string ctx = "eval";
  reject_unknown_keys(j,
                      {"vi_length", "vi_variable", "pretrain_epochs", "seeds", "sweep_tau",
                       "sweep_hidden"},
                      ctx);
  EvalSection e;
  read_key(j, "vi_length", e.vi_length, ctx);
  read_key(j, "vi_variable", e.vi_variable, ctx);
  read_key(j, "pretrain_epochs", e.pretrain_epochs, ctx);
  read_key(j, "seeds", e.seeds, ctx);
  read_key(j, "sweep_tau", e.sweep_tau, ctx);
  read_key(j, "sweep_hidden", e.sweep_hidden, ctx);
  if (e.vi_length < 1) throw ConfigError("eval.vi_length must be >= 1");
  if (e.vi_variable < 0 || e.vi_variable >= kNumVariables) {
    throw ConfigError("eval.vi_variable must be in [0, 3]");
  }
  if (e.pretrain_epochs < 0) throw ConfigError("eval.pretrain_epochs must be >= 0");
  if (e.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  for (double t : e.sweep_tau) {
    if (!(t > 0.0)) throw ConfigError("eval.sweep_tau values must be > 0");
  }
  for (double h : e.sweep_hidden) {
    if (!(h >= 1.0)) throw ConfigError("eval.sweep_hidden values must be >= 1");
  }
  return e;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"sim", "train", "eval"}, "config");
  RunConfig c;
  if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim"));
  validate(c.sim);
  if (j.contains("train")) c.train = training::train_config_from_json(j.at("train"));
  if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  return {{"sim", to_json(c.sim)},
          {"train", training::to_json(c.train)},
          {"eval",
           {{"vi_length", c.eval.vi_length},
            {"vi_variable", c.eval.vi_variable},
            {"pretrain_epochs", c.eval.pretrain_epochs},
            {"seeds", c.eval.seeds},
            {"sweep_tau", c.eval.sweep_tau},
            {"sweep_hidden", c.eval.sweep_hidden}}}};
}

void write_resolved_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_json(c).dump(2) << "\n";
}

}  // namespace asgn
