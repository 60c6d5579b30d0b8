// SPDX-License-Identifier: Apache-2.0
//
// Acceptance report: one PASS/FAIL line per criterion, plus a JSON summary.
//
//   acceptance --cli <path to asgn> --reference <reference text> [--only 1,2,...]
//              [--work <dir>] [--report <json>]
//
// Exit status is 0 only when every selected criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "asgn/eval.hpp"
#include "asgn/graphbuild.hpp"
#include "asgn/run_config.hpp"
#include "asgn/synthgen.hpp"
#include "asgn/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace asgn;
using nlohmann::json;

namespace {

struct Context {
  std::string cli;
  std::string reference;
  fs::path work;
  json report = json::object();
  // Shared by criteria 1, 4 and 5.
  std::optional<std::vector<eval::AblationRow>> ablation;
  std::optional<Dataset> dataset;
  double ablation_seconds = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string f4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

int run(const std::string& cmd) {
  const std::string quiet = cmd + " > /dev/null 2>&1";
  return std::system(quiet.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---- shared experiment ---------------------------------------------------------------

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

void ensure_ablation(Context& ctx) {
  if (ctx.ablation) return;
  const auto t0 = std::chrono::steady_clock::now();
  ctx.dataset = generate_dataset(SimConfig{});
  training::TrainConfig base;
  eval::ExperimentOptions opt;
  opt.log = [](const std::string& s) { std::cerr << "  [ablation] " << s << "\n"; };
  ctx.ablation = eval::run_ablation(*ctx.dataset, base, kSeeds, opt);
  ctx.ablation_seconds = seconds_since(t0);
}

/// Mean over seeds of the persistence R^2 (identical across runs; same windows).
std::array<double, kNumVariables> persistence_r2(const eval::AblationRow& row) {
  std::array<double, kNumVariables> out{};
  for (const auto& run : row.runs) {
    for (int v = 0; v < kNumVariables; ++v) out[v] += run.test.persistence[v].r2.value_or(NAN);
  }
  for (double& x : out) x /= static_cast<double>(row.runs.size());
  return out;
}

// ---- criteria ----------------------------------------------------------------------------

struct Verdict {
  bool pass = false;
  std::string summary;
  json detail = json::object();
};

/// Command-line worked examples: a tiny training run overfits, and the
/// persistence baseline matches a direct computation from the stored states.
std::vector<oracle::Check> cli_examples(Context& ctx) {
  std::vector<oracle::Check> out;
  const fs::path dir = ctx.work / "c1";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "tiny.json") << oracle::tiny_overfit_config();
  const std::string cfg = (dir / "tiny.json").string();
  const bool sim_ok = run(ctx.cli + " simulate --config " + cfg + " --out " + (dir / "data").string()) == 0;
  const bool train_ok = sim_ok && run(ctx.cli + " train --config " + cfg + " --data " +
                                      (dir / "data").string() + " --out " + (dir / "run").string()) == 0;
  double last = NAN;
  if (train_ok) {
    std::ifstream f(dir / "run" / "losses.csv");
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      const auto a = line.find(','), b = line.find(',', a + 1);
      last = std::stod(line.substr(a + 1, b - a - 1));
    }
  }
  out.push_back({"cli: tiny overfit run reaches train L1 < 0.01", train_ok && last < 0.01,
                 "final train loss " + std::to_string(last)});

  const bool eval_ok = sim_ok && run(ctx.cli + " evaluate --baseline persistence --data " +
                                     (dir / "data").string() + " --out " +
                                     (dir / "eval").string()) == 0;
  bool match = false;
  std::string why = "evaluate failed";
  if (eval_ok) {
    const json m = json::parse(slurp(dir / "eval" / "metrics.persistence.json"));
    const Dataset ds = read_dataset(dir / "data");
    match = true;
    why.clear();
    const int win = training::TrainConfig{}.window;
    for (int v = 0; v < kNumVariables; ++v) {
      // Every (grid cell, t) with t >= win - 1 whose label t + 1 lies in the test split.
      std::vector<double> truth, pred;
      for (int t = win - 1; t + 1 < ds.steps(); ++t) {
        if (t + 1 < ds.split.val_end) continue;
        for (std::size_t c = 0; c < ds.grid.size(); ++c) {
          truth.push_back(ds.states.cell_value(t + 1, c, v));
          pred.push_back(ds.states.cell_value(t, c, v));
        }
      }
      double mean = 0.0;
      for (double x : truth) mean += x;
      mean /= static_cast<double>(truth.size());
      double ss_res = 0.0, ss_tot = 0.0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
      }
      const double want = 1.0 - ss_res / ss_tot;
      const double got = m["metrics"][kVariableNames[v]]["r2"].get<double>();
      match = match && std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want));
      why += std::string(kVariableNames[v]) + " " + f4(got) + "/" + f4(want) + " ";
    }
  }
  out.push_back({"cli: --baseline persistence R2 equals x_t-as-forecast oracle", match, why});
  return out;
}

Verdict criterion1(Context& ctx, bool include_ordering) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<oracle::Check> checks;
  auto stage = [&](const char* name, const std::function<void()>& fn) {
    const auto s0 = std::chrono::steady_clock::now();
    fn();
    std::cerr << "  [1] " << name << " " << f4(seconds_since(s0)) << " s\n";
  };
  stage("worked examples", [&] { checks = oracle::worked_examples(); });
  stage("graph suite", [&] { checks.push_back(oracle::graph_suite(100, 2024)); });
  stage("window suite", [&] { checks.push_back(oracle::window_suite(7)); });
  stage("overfit", [&] { checks.push_back(oracle::single_window_overfit(3)); });
  stage("command line", [&] {
    for (auto& c : cli_examples(ctx)) checks.push_back(c);
  });
  const double secs = seconds_since(t0);

  Verdict v;
  int failed = 0;
  json list = json::array();
  for (const auto& c : checks) {
    list.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    if (!c.pass) {
      ++failed;
      std::cerr << "  [1] FAIL " << c.name << ": " << c.detail << "\n";
    }
  }
  // The empirical ablation-ordering example reuses the criterion 4 runs and is
  // not part of the timed suite.
  bool ordering = true;
  std::string ordering_note = "not run";
  if (include_ordering) {
    ensure_ablation(ctx);
    const auto& rows = *ctx.ablation;
    ordering_note.clear();
    for (int var = 0; var < kNumVariables; ++var) {
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const bool ok = rows[0].r2[var] >= rows[r].r2[var] - 0.02;
        ordering = ordering && ok;
        if (!ok) {
          ordering_note += std::string(kVariableNames[var]) + ": full " + f4(rows[0].r2[var]) +
                           " < " + model::to_string(rows[r].variant) + " " +
                           f4(rows[r].r2[var]) + " - 0.02; ";
        }
      }
    }
    if (ordering_note.empty()) ordering_note = "full >= each ablation - 0.02 on every variable";
    list.push_back({{"name", "eval: full R2 >= ablated R2 - 0.02 (3 seeds)"},
                    {"pass", ordering},
                    {"detail", ordering_note}});
  }
  v.pass = failed == 0 && secs < 60.0 && ordering;
  v.summary = std::to_string(checks.size() - static_cast<std::size_t>(failed)) + "/" +
              std::to_string(checks.size()) + " oracle checks in " + f4(secs) + " s (limit 60)" +
              (include_ordering ? "; ablation ordering: " + std::string(ordering ? "ok" : "violated")
                                : "");
  v.detail = {{"checks", list}, {"seconds", secs}};
  return v;
}

Verdict criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t scalars = 0;
  std::string where;
  json seeds = json::array();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    struct Mode {
      const char* name;
      bool relaxed;
      model::Phase phase;
    };
    json row = {{"seed", seed}};
    for (const Mode m : {Mode{"relaxed/finetune", true, model::Phase::kFinetune},
                         Mode{"relaxed/pretrain", true, model::Phase::kPretrain},
                         Mode{"hard/finetune", false, model::Phase::kFinetune}}) {
      const auto r = oracle::full_model_gradient_check(seed, m.relaxed, m.phase);
      row[m.name] = r.max_rel_err;
      scalars += r.checked;
      if (r.max_rel_err > worst) {
        worst = r.max_rel_err;
        where = "seed " + std::to_string(seed) + " " + m.name + " " + r.worst;
      }
    }
    seeds.push_back(row);
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst < 1e-3 && secs < 300.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max relative error %.2e over %zu comparisons, 10 seeds, %.1f s",
                worst, scalars, secs);
  v.summary = buf;
  if (!v.pass) v.summary += " (worst: " + where + ")";
  v.detail = {{"seeds", seeds}, {"max_rel_err", worst}, {"seconds", secs}, {"worst", where}};
  return v;
}

Verdict criterion3() {
  const auto r = oracle::gumbel_frequencies(99, 20000, 5);
  Verdict v;
  v.pass = r.pass;
  v.summary = "largest deviation " + f4(r.worst_z) + " standard errors (limit 3), 5 vectors x 20000 draws";
  v.detail = {{"worst_z", r.worst_z}};
  return v;
}

Verdict criterion4(Context& ctx) {
  ensure_ablation(ctx);
  const auto& rows = *ctx.ablation;
  const auto pers = persistence_r2(rows[0]);
  bool pass = ctx.ablation_seconds < 1800.0;
  std::string s;
  json table = json::object();
  for (const auto& row : rows) {
    json r = json::object();
    for (int v = 0; v < kNumVariables; ++v) r[kVariableNames[v]] = row.r2[v];
    table[model::to_string(row.variant)] = r;
  }
  json pj = json::object();
  for (int v = 0; v < kNumVariables; ++v) pj[kVariableNames[v]] = pers[v];
  table["persistence"] = pj;

  bool a = true, b = true, c = true;
  for (int v = 0; v < kNumVariables; ++v) {
    a = a && rows[0].r2[v] - pers[v] >= 0.02;
    b = b && rows[0].r2[v] - rows[2].r2[v] >= 0.02;
    c = c && rows[0].r2[v] - rows[1].r2[v] >= 0.01;
  }
  pass = pass && a && b && c;
  s = "R2 full/persist/no-dist/fixed:";
  for (int v = 0; v < kNumVariables; ++v) {
    s += std::string(" ") + kVariableNames[v] + " " + f4(rows[0].r2[v]) + "/" + f4(pers[v]) + "/" +
         f4(rows[1].r2[v]) + "/" + f4(rows[2].r2[v]);
  }
  s += std::string("; vs persistence ") + (a ? "ok" : "short") + ", vs fixed-graph " +
       (b ? "ok" : "short") + ", vs no-distance " + (c ? "ok" : "short") + "; " +
       f4(ctx.ablation_seconds) + " s";
  Verdict v;
  v.pass = pass;
  v.summary = s;
  v.detail = {{"r2", table},
              {"seconds", ctx.ablation_seconds},
              {"beats_persistence", a},
              {"beats_fixed_graph", b},
              {"beats_no_distance", c}};
  return v;
}

Verdict criterion5(Context& ctx) {
  ensure_ablation(ctx);
  const auto& rows = *ctx.ablation;
  // High-minus-low MAE per variable in z-score units, averaged over variables
  // and seeds.
  auto gap = [&](const eval::AblationRow& r) { return r.gap; };
  const double full = gap(rows[0]), fixed = gap(rows[2]);
  Verdict v;
  v.pass = full <= fixed;
  v.summary = "MAE(high VI) - MAE(low VI), z units: full " + f4(full) + ", fixed-graph " + f4(fixed);
  v.detail = {{"full", full}, {"no_distance", gap(rows[1])}, {"fixed_graph", fixed}};
  return v;
}

Verdict criterion6(const Context& ctx) {
  const std::string text = slurp(ctx.reference);
  std::smatch m;
  auto find = [&](const char* re) -> std::vector<std::string> {
    if (!std::regex_search(text, m, std::regex(re))) return {};
    std::vector<std::string> out;
    for (std::size_t i = 1; i < m.size(); ++i) out.push_back(m[i]);
    return out;
  };
  const auto split = find(R"(ratio of (\d+):(\d+):(\d+))");
  const auto window = find(R"(use (\d+) time steps of historical weather data to predict the next (\d+))");
  const auto khop = find(R"(hop radius as (\d+))");
  const auto radius = find(R"(within a (\d+) ?km radius)");
  const auto best = find(R"(\\tau = ([0-9.]+)\$, and hidden dimension = (\d+))");

  const SimConfig sim;
  const training::TrainConfig tc;
  const RunConfig rc = run_config_from_json(json::object());
  const SplitBounds sb = chronological_split(sim.steps);
  const SplitBounds sb10 = chronological_split(10);

  json d = json::object();
  bool ok = true;
  auto expect = [&](const std::string& key, bool cond, const std::string& note) {
    d[key] = {{"pass", cond}, {"detail", note}};
    ok = ok && cond;
  };
  expect("split", split.size() == 3 && split[0] == "6" && split[1] == "2" && split[2] == "2" &&
                      sb.train_end == 72 && sb.val_end == 96 && sb10.train_end == 6 &&
                      sb10.val_end == 8,
         "reference " + (split.empty() ? std::string("missing") : split[0] + ":" + split[1] + ":" + split[2]) +
             ", 120 steps -> [0,72) [72,96) [96,120)");
  expect("window", window.size() == 2 && std::stoi(window[0]) == tc.window &&
                       std::stoi(window[1]) == 1 && rc.train.window == 8,
         "reference m=" + (window.empty() ? std::string("?") : window[0]) + ", default " +
             std::to_string(tc.window));
  expect("khop", khop.size() == 1 && std::stoi(khop[0]) == tc.khop && rc.train.khop == 3,
         "reference k=" + (khop.empty() ? std::string("?") : khop[0]) + ", default " +
             std::to_string(tc.khop));
  expect("radius_km", radius.size() == 1 && std::stod(radius[0]) == tc.radius_km &&
                          rc.train.radius_km == 50.0,
         "reference " + (radius.empty() ? std::string("?") : radius[0]) + " km, default " +
             f4(tc.radius_km));
  expect("tau_hidden", best.size() == 2 && std::stod(best[0]) == tc.tau &&
                           std::stoi(best[1]) == tc.hidden,
         "reference tau=" + (best.empty() ? std::string("?") : best[0] + " hidden=" + best[1]) +
             ", default tau=" + f4(tc.tau) + " hidden=" + std::to_string(tc.hidden));
  Verdict v;
  v.pass = ok;
  v.summary = "6:2:2 split, m=8 -> 1, k=3, 50 km, tau=0.5, hidden=32 defaults match the reference text";
  if (!ok) v.summary = "protocol defaults disagree with the reference text (see report)";
  v.detail = d;
  return v;
}

Verdict criterion7(Context& ctx) {
  const fs::path dir = ctx.work / "c7";
  fs::remove_all(dir);
  fs::create_directories(dir);
  json cfg = json::parse(oracle::tiny_overfit_config());
  cfg["train"]["epochs"] = 6;
  std::ofstream(dir / "cfg.json") << cfg.dump(2);
  const std::string c = (dir / "cfg.json").string(), data = (dir / "data").string();
  bool ok = run(ctx.cli + " simulate --config " + c + " --out " + data) == 0;
  for (const char* r : {"a", "b"}) {
    ok = ok && run(ctx.cli + " train --config " + c + " --data " + data + " --seed 11 --out " +
                   (dir / r).string()) == 0;
  }
  ok = ok && run(ctx.cli + " train --config " + c + " --data " + data +
                 " --seed 11 --jobs 3 --out " + (dir / "c").string()) == 0;
  bool same = ok;
  std::string note;
  for (const char* f : {"checkpoint.bin", "losses.csv"}) {
    const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    note += std::string(f) + (eq ? " identical" : " differ") + " (" + std::to_string(a.size()) +
            " bytes); ";
  }
  // The worker count is echoed in the config header, so the threaded run is
  // compared tensor by tensor.
  if (ok) {
    const auto a = training::load_checkpoint(dir / "a" / "checkpoint.bin");
    const auto t = training::load_checkpoint(dir / "c" / "checkpoint.bin");
    bool eq = a.optimizer == t.optimizer && a.epoch == t.epoch &&
              a.params.size() == t.params.size();
    for (std::size_t i = 0; eq && i < a.params.size(); ++i) {
      eq = a.params.tensors()[i].value == t.params.tensors()[i].value;
    }
    eq = eq && slurp(dir / "a" / "losses.csv") == slurp(dir / "c" / "losses.csv");
    same = same && eq;
    note += std::string("3 workers: ") + (eq ? "identical tensors and losses" : "differs");
  }
  Verdict v;
  v.pass = same;
  v.summary = "two runs and a 3-worker run with seed 11: " + note;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance report"};
  Context ctx;
  std::string only = "1,2,3,4,5,6,7";
  std::string work = (fs::temp_directory_path() / "asgn-acceptance").string();
  std::string report_path;
  app.add_option("--cli", ctx.cli, "Path to the asgn executable")->required();
  app.add_option("--reference", ctx.reference, "Reference text with the protocol values")->required();
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--report", report_path, "Write a JSON summary here");
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  fs::create_directories(ctx.work);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');) selected.insert(std::stoi(tok));
  const bool long_runs = selected.contains(4) || selected.contains(5);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, [&] { return criterion1(ctx, long_runs); }},
      {2, [&] { return criterion2(); }},
      {3, [&] { return criterion3(); }},
      {4, [&] { return criterion4(ctx); }},
      {5, [&] { return criterion5(ctx); }},
      {6, [&] { return criterion6(ctx); }},
      {7, [&] { return criterion7(ctx); }},
  };
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!selected.contains(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.summary = std::string("error: ") + e.what();
    }
    all = all && v.pass;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " - " << v.summary
              << std::endl;
    ctx.report[std::to_string(id)] = {{"pass", v.pass}, {"summary", v.summary}, {"detail", v.detail}};
  }
  if (!report_path.empty()) std::ofstream(report_path) << ctx.report.dump(2) << "\n";
  return all ? 0 : 1;
}
