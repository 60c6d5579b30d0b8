// SPDX-License-Identifier: Apache-2.0
//
// asgn: simulate, train, evaluate, ablate, sweep, inspect.
//
// Exit codes: 0 success, 1 bad input or config, 2 training divergence or a
// checkpoint that does not fit the model/dataset.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "asgn/eval.hpp"
#include "asgn/graphbuild.hpp"
#include "asgn/run_config.hpp"
#include "asgn/structlearn.hpp"
#include "asgn/training.hpp"

namespace fs = std::filesystem;
using namespace asgn;

namespace {

constexpr int kExitBadInput = 1;
constexpr int kExitModel = 2;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("asgn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("ASGN_LOG")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

// Flags shared by the commands that train or evaluate.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> phase;
  std::optional<double> tau, radius_km, lr;
  std::optional<int> hidden, window, khop, jobs, epochs;
  bool freeze_structure = false;
  std::optional<std::string> baseline;

  void add_to(CLI::App* c, bool training) {
    c->add_option("--config", config, "JSON config with sim/train/eval sections");
    c->add_option("--seed", seed, "Seed for every stochastic step");
    c->add_option("--tau", tau, "Gumbel-Softmax temperature");
    c->add_option("--hidden", hidden, "Hidden width d'");
    c->add_option("--window", window, "Input window length m (default 8)");
    c->add_option("--khop", khop, "Subgraph radius in hops (default 3)");
    c->add_option("--radius-km", radius_km, "Initial edge radius (default 50)");
    c->add_option("--jobs", jobs, "Worker threads");
    if (training) {
      c->add_option("--phase", phase, "pretrain | finetune")
          ->check(CLI::IsMember({"pretrain", "finetune"}));
      c->add_option("--lr", lr, "Learning rate");
      c->add_option("--epochs", epochs, "Epoch budget");
      c->add_flag("--freeze-structure", freeze_structure,
                  "Hold score/degree parameters fixed during fine-tuning");
    }
  }

  RunConfig resolve() const {
    RunConfig rc = config.empty() ? RunConfig{} : load_run_config(config);
    auto& t = rc.train;
    if (seed) t.seed = *seed;
    if (phase) t.phase = model::phase_from_string(*phase);
    if (tau) t.tau = *tau;
    if (radius_km) t.radius_km = *radius_km;
    if (lr) t.lr = *lr;
    if (hidden) t.hidden = *hidden;
    if (window) t.window = *window;
    if (khop) t.khop = *khop;
    if (jobs) t.jobs = *jobs;
    if (epochs) t.epochs = *epochs;
    if (freeze_structure) t.freeze_structure = true;
    if (baseline && *baseline == "fixed-graph") t.variant = model::Variant::kFixedGraph;
    training::validate(t);
    return rc;
  }
};

Dataset load_dataset(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--data is required");
  spdlog::debug("reading dataset {}", dir);
  return read_dataset(dir);
}

void make_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
}

// ---- simulate ---------------------------------------------------------------------------

int cmd_simulate(const Overrides& o, const std::string& out) {
  RunConfig rc = o.resolve();
  if (o.seed) rc.sim.seed = *o.seed;
  validate(rc.sim);
  const Dataset ds = generate_dataset(rc.sim);
  make_out_dir(out);
  write_dataset(ds, out);
  std::cout << "grid_nodes " << ds.grid.size() << "\nsteps " << ds.steps() << "\nobservations "
            << ds.observation_count() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------------------

int cmd_train(const Overrides& o, const std::string& data, const std::string& out,
              const std::string& pretrain_ckpt) {
  const RunConfig rc = o.resolve();
  const Dataset ds = load_dataset(data);
  make_out_dir(out);
  write_resolved_config(rc, fs::path(out) / "config.resolved.json");

  training::FitOptions fo;
  if (!pretrain_ckpt.empty()) {
    if (rc.train.phase != model::Phase::kFinetune) {
      throw ConfigError("--pretrain-checkpoint only applies to --phase finetune");
    }
    const auto pre = training::load_checkpoint(pretrain_ckpt);
    fo.init = training::handoff(pre.params, training::shape_for(rc.train, ds.config), rc.train.seed);
    spdlog::info("loaded pretrain checkpoint {} (epoch {})", pretrain_ckpt, pre.epoch);
  }
  fo.on_epoch = [](const training::EpochLoss& e) {
    spdlog::info("epoch {:3d}  train {:.5f}  val {:.5f}", e.epoch, e.train, e.val);
  };
  spdlog::info("{} {} on {} training windows", model::to_string(rc.train.phase),
               model::to_string(rc.train.variant),
               training::training_keys(ds, rc.train).size());
  const auto result = training::fit(ds, rc.train, fo);
  training::save_checkpoint(result.checkpoint, fs::path(out) / "checkpoint.bin");
  training::write_loss_csv(result.curve, fs::path(out) / "losses.csv");
  if (result.diverged) {
    spdlog::error("training diverged; kept the checkpoint from epoch {}", result.checkpoint.epoch);
    return kExitModel;
  }
  spdlog::info("best validation epoch {}", result.best_epoch);
  return 0;
}

// ---- evaluate -------------------------------------------------------------------------

training::TrainConfig config_from_checkpoint(const training::Checkpoint& c, const Overrides& o) {
  training::TrainConfig t;
  try {
    t = training::train_config_from_json(c.config);
  } catch (const ConfigError& e) {
    throw ModelError(std::string("checkpoint config echo: ") + e.what());
  }
  if (o.window) t.window = *o.window;
  if (o.khop) t.khop = *o.khop;
  if (o.radius_km) t.radius_km = *o.radius_km;
  if (o.jobs) t.jobs = *o.jobs;
  if (o.tau) t.tau = *o.tau;
  t.phase = model::Phase::kFinetune;
  return t;
}

int cmd_evaluate(const Overrides& o, const std::string& data, const std::string& out,
                 const std::string& ckpt, const std::string& split_name) {
  const RunConfig rc = o.resolve();
  const Dataset ds = load_dataset(data);
  make_out_dir(out);
  const Split split = split_name == "train" ? Split::kTrain
                      : split_name == "val" ? Split::kVal
                                            : Split::kTest;
  const auto baseline =
      o.baseline ? eval::baseline_from_string(*o.baseline) : eval::Baseline::kNone;

  eval::Predictions p;
  std::string evaluated;
  if (baseline == eval::Baseline::kPersistence) {
    // Persistence needs no model; any window length works.
    training::TrainConfig t = rc.train;
    t.khop = 0;
    const DatasetGraphs graphs(ds, RadiusOptions{t.radius_km, true});
    std::vector<NodeId> targets = graphs.grid_ids();
    p.keys = window_keys(ds.split, t.window, targets, split);
    const auto n = static_cast<Eigen::Index>(p.keys.size());
    p.pred.resize(n, kNumVariables);
    p.truth.resize(n, kNumVariables);
    p.persistence.resize(n, kNumVariables);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& k = p.keys[static_cast<std::size_t>(i)];
      for (int v = 0; v < kNumVariables; ++v) {
        p.truth(i, v) = ds.states.cell_value(k.t_end + 1, static_cast<std::size_t>(k.target), v);
        p.persistence(i, v) = ds.states.cell_value(k.t_end, static_cast<std::size_t>(k.target), v);
      }
    }
    p.pred = p.persistence;
    evaluated = "persistence";
  } else {
    if (ckpt.empty()) throw ConfigError("--checkpoint is required unless --baseline persistence");
    training::Checkpoint c;
    try {
      c = training::load_checkpoint(ckpt);
    } catch (const training::CheckpointError& e) {
      throw ModelError(e.what());
    }
    const auto t = config_from_checkpoint(c, o);
    if (!(c.params.shape() == training::shape_for(t, ds.config))) {
      throw ModelError("checkpoint shape does not match this dataset (platform count or widths)");
    }
    if (baseline == eval::Baseline::kFixedGraph && t.variant != model::Variant::kFixedGraph) {
      throw ConfigError("--baseline fixed-graph needs a checkpoint trained with that variant");
    }
    const DatasetGraphs graphs(ds, RadiusOptions{t.radius_km, true});
    p = eval::predict(ds, graphs, c.params, t, split);
    evaluated = model::to_string(t.variant);
  }
  const auto r = eval::report(ds, p, split, rc.eval_options());
  // The test report owns metrics.json; other splits and baselines get their
  // own files so they never overwrite it.
  std::string stem = "metrics";
  std::string strat = "stratified";
  if (split != Split::kTest) {
    stem += "." + r.split;
    strat += "." + r.split;
  }
  if (baseline == eval::Baseline::kPersistence) {
    stem += ".persistence";
    strat += ".persistence";
  }
  std::ofstream(fs::path(out) / (stem + ".json")) << eval::to_json(r, evaluated).dump(2) << "\n";
  if (r.stratified) eval::write_stratified_csv(r, fs::path(out) / (strat + ".csv"));
  for (std::size_t v = 0; v < r.model.size(); ++v) {
    std::cout << kVariableNames[v] << " rmse " << r.model[v].rmse << " mae " << r.model[v].mae
              << " r2 " << (r.model[v].r2 ? std::to_string(*r.model[v].r2) : "undefined") << "\n";
  }
  return 0;
}

// ---- ablate / sweep -------------------------------------------------------------------

eval::ExperimentOptions experiment_options(const RunConfig& rc) {
  eval::ExperimentOptions opt;
  opt.pretrain_epochs = rc.eval.pretrain_epochs;
  opt.eval = rc.eval_options();
  opt.log = [](const std::string& s) { spdlog::info("{}", s); };
  return opt;
}

int cmd_ablate(const Overrides& o, const std::string& data, const std::string& out) {
  RunConfig rc = o.resolve();
  const Dataset ds = load_dataset(data);
  make_out_dir(out);
  write_resolved_config(rc, fs::path(out) / "config.resolved.json");
  const auto rows = eval::run_ablation(ds, rc.train, rc.eval.seeds, experiment_options(rc));
  eval::write_ablation_csv(rows, fs::path(out) / "ablation.csv");
  for (const auto& r : rows) {
    std::cout << model::to_string(r.variant) << " R2 " << r.r2[0] << " " << r.r2[1] << " "
              << r.r2[2] << " " << r.r2[3] << "\n";
  }
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& data, const std::string& out,
              const std::string& param, bool svg) {
  RunConfig rc = o.resolve();
  const Dataset ds = load_dataset(data);
  make_out_dir(out);
  write_resolved_config(rc, fs::path(out) / "config.resolved.json");
  std::vector<eval::SweepPoint> pts;
  const auto opt = experiment_options(rc);
  if (param == "tau" || param == "both") {
    auto p = eval::run_sensitivity(ds, rc.train, "tau", rc.eval.sweep_tau, rc.eval.seeds, opt);
    pts.insert(pts.end(), p.begin(), p.end());
  }
  if (param == "hidden" || param == "both") {
    auto p =
        eval::run_sensitivity(ds, rc.train, "hidden", rc.eval.sweep_hidden, rc.eval.seeds, opt);
    pts.insert(pts.end(), p.begin(), p.end());
  }
  eval::write_sweep_csv(pts, fs::path(out) / "sweep.csv");
  if (svg) std::ofstream(fs::path(out) / "sweep.svg") << eval::sweep_svg(pts);
  return 0;
}

// ---- inspect --------------------------------------------------------------------------

int cmd_inspect(const Overrides& o, const std::string& data, const std::string& ckpt,
                std::optional<NodeId> target, std::optional<int> t_end) {
  if (!ckpt.empty()) {
    training::Checkpoint c;
    try {
      c = training::load_checkpoint(ckpt);
    } catch (const training::CheckpointError& e) {
      throw ModelError(e.what());
    }
    std::cout << "checkpoint " << ckpt << "\nepoch " << c.epoch << "\nparameters "
              << c.params.scalar_count() << "\nconfig " << c.config.dump() << "\n";
    if (data.empty()) {
      for (const auto& t : c.params.tensors()) {
        std::cout << "  " << t.name << " " << t.value.rows() << "x" << t.value.cols() << "\n";
      }
      return 0;
    }
  }
  const Dataset ds = load_dataset(data);
  std::cout << "grid_nodes " << ds.grid.size() << "\nsteps " << ds.steps() << "\nobservations "
            << ds.observation_count() << "\nsplit train [0," << ds.split.train_end << ") val ["
            << ds.split.train_end << "," << ds.split.val_end << ") test [" << ds.split.val_end
            << "," << ds.split.steps << ")\n";
  for (std::size_t p = 0; p < ds.config.platforms.size(); ++p) {
    std::size_t n = 0;
    for (const auto& step : ds.obs) {
      for (const auto& ob : step) n += ob.platform == static_cast<int>(p);
    }
    std::cout << "platform " << p << " " << ds.config.platforms[p].name << " " << n << "\n";
  }
  if (!target) return 0;

  // Learned adjacency of one window: kept degree per step versus candidates.
  training::TrainConfig t = o.resolve().train;
  training::Checkpoint c;
  const bool have_model = !ckpt.empty();
  if (have_model) {
    c = training::load_checkpoint(ckpt);
    t = config_from_checkpoint(c, o);
  } else {
    c.params = model::ModelParams::init(training::shape_for(t, ds.config), t.seed);
  }
  const DatasetGraphs graphs(ds, RadiusOptions{t.radius_km, true});
  const WindowKey key{*target, t_end.value_or(t.window - 1)};
  const auto w = make_window(graphs, key, t.window, t.khop, false);
  ad::Tape tape;
  const auto b = model::bind(tape, c.params, std::vector<bool>(c.params.size(), false));
  ZeroNoise noise;
  const auto f = model::forecast(b, w, training::forward_config(t), noise);
  for (std::size_t s = 0; s < w.snapshots.size(); ++s) {
    const auto& g = w.snapshots[s];
    std::cout << "step " << g.t << " nodes " << g.size() << " radius_edges " << g.edges.size()
              << " kept_edges " << static_cast<long long>(f.adjacency[s].sum() / 2) << "\n";
  }
  std::cout << "forecast";
  for (int v = 0; v < kNumVariables; ++v) {
    std::cout << " " << kVariableNames[v] << "="
              << ds.norm.from_z(v, f.prediction.value()(0, v));
  }
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Adaptive graph-structure forecaster on a synthetic advection benchmark"};
  app.require_subcommand(1);

  Overrides o;
  std::string data, out, ckpt, pretrain_ckpt, split = "test", param = "both";
  bool svg = false;
  std::optional<NodeId> target;
  std::optional<int> t_end;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset directory");
  sim->add_option("--config", o.config, "JSON config");
  sim->add_option("--seed", o.seed, "Simulation seed (overrides sim.seed)");
  sim->add_option("--out", out, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Pretrain or fine-tune; writes checkpoint.bin");
  o.add_to(train, true);
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--pretrain-checkpoint", pretrain_ckpt, "Checkpoint from --phase pretrain");
  train->add_option("--baseline", o.baseline, "Train the fixed-graph ablation instead")
      ->check(CLI::IsMember({"fixed-graph"}));

  auto* ev = app.add_subcommand("evaluate", "Metrics and VI-stratified MAE");
  o.add_to(ev, false);
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--out", out, "Run directory")->required();
  ev->add_option("--checkpoint", ckpt, "Checkpoint to evaluate");
  ev->add_option("--split", split, "train | val | test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--baseline", o.baseline, "persistence | fixed-graph")
      ->check(CLI::IsMember({"persistence", "fixed-graph"}));

  auto* ab = app.add_subcommand("ablate", "Full vs no-distance vs fixed-graph, R2 per variable");
  o.add_to(ab, true);
  ab->add_option("--data", data, "Dataset directory")->required();
  ab->add_option("--out", out, "Run directory")->required();

  auto* sw = app.add_subcommand("sweep", "Sensitivity to tau and hidden size");
  o.add_to(sw, true);
  sw->add_option("--data", data, "Dataset directory")->required();
  sw->add_option("--out", out, "Run directory")->required();
  sw->add_option("--param", param, "tau | hidden | both")
      ->check(CLI::IsMember({"tau", "hidden", "both"}));
  sw->add_flag("--svg", svg, "Also write sweep.svg");

  auto* in = app.add_subcommand("inspect", "Summarise a dataset, checkpoint or window");
  o.add_to(in, false);
  in->add_option("--data", data, "Dataset directory");
  in->add_option("--checkpoint", ckpt, "Checkpoint file");
  in->add_option("--target", target, "Grid node id for a learned-adjacency dump");
  in->add_option("--t-end", t_end, "Last input step of that window");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (train->parsed()) return cmd_train(o, data, out, pretrain_ckpt);
    if (ev->parsed()) return cmd_evaluate(o, data, out, ckpt, split);
    if (ab->parsed()) return cmd_ablate(o, data, out);
    if (sw->parsed()) return cmd_sweep(o, data, out, param, svg);
    if (in->parsed()) return cmd_inspect(o, data, ckpt, target, t_end);
  } catch (const ModelError& e) {
    spdlog::error("{}", e.what());
    return kExitModel;
  } catch (const training::CheckpointError& e) {
    spdlog::error("{}", e.what());
    return kExitModel;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitBadInput;
  } catch (const DatasetParseError& e) {
    spdlog::error("{}", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitBadInput;
  }
  return kExitBadInput;
}
