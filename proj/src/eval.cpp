// SPDX-License-Identifier: Apache-2.0
#include "asgn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace asgn::eval {

using nlohmann::json;

std::vector<VariableMetrics> metrics(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw std::invalid_argument("metrics: prediction and truth shapes differ");
  }
  if (truth.rows() == 0) throw std::invalid_argument("metrics: no samples");
  const double n = static_cast<double>(truth.rows());
  std::vector<VariableMetrics> out(static_cast<std::size_t>(truth.cols()));
  for (Eigen::Index v = 0; v < truth.cols(); ++v) {
    const double mean = truth.col(v).mean();
    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
    for (Eigen::Index r = 0; r < truth.rows(); ++r) {
      const double e = pred(r, v) - truth(r, v);
      ss_res += e * e;
      abs_sum += std::abs(e);
      const double d = truth(r, v) - mean;
      ss_tot += d * d;
    }
    auto& m = out[static_cast<std::size_t>(v)];
    m.rmse = std::sqrt(ss_res / n);
    m.mae = abs_sum / n;
    if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  }
  return out;
}

double variability_index(std::span<const double> series, int length) {
  if (length < 1) throw std::invalid_argument("variability_index: length must be >= 1");
  if (series.size() < static_cast<std::size_t>(length)) {
    throw std::invalid_argument("variability_index: series has " + std::to_string(series.size()) +
                                " values, need " + std::to_string(length));
  }
  const auto s = series.first(static_cast<std::size_t>(length));
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / length;
  double ss = 0.0;
  for (double x : s) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / length);
}

std::string to_string(Group g) {
  switch (g) {
    case Group::kLow: return "low";
    case Group::kHigh: return "high";
    case Group::kNone: return "none";
  }
  return "?";
}

std::vector<Group> stratify_nodes(std::span<const double> vi, std::span<const NodeId> ids) {
  const std::size_t n = vi.size();
  if (n < 4) throw std::invalid_argument("stratify_nodes: need at least 4 nodes");
  if (!ids.empty() && ids.size() != n) throw std::invalid_argument("stratify_nodes: id count");
  auto id_of = [&](std::size_t i) { return ids.empty() ? static_cast<NodeId>(i) : ids[i]; };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (vi[a] != vi[b]) return vi[a] < vi[b];
    return id_of(a) < id_of(b);
  });
  const std::size_t q = n / 4;
  std::vector<Group> out(n, Group::kNone);
  for (std::size_t r = 0; r < q; ++r) {
    out[order[r]] = Group::kLow;
    out[order[n - 1 - r]] = Group::kHigh;
  }
  return out;
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kNone: return "none";
    case Baseline::kPersistence: return "persistence";
    case Baseline::kFixedGraph: return "fixed-graph";
  }
  return "?";
}

Baseline baseline_from_string(const std::string& s) {
  if (s == "none") return Baseline::kNone;
  if (s == "persistence") return Baseline::kPersistence;
  if (s == "fixed-graph") return Baseline::kFixedGraph;
  throw std::invalid_argument("unknown baseline '" + s + "' (persistence | fixed-graph)");
}

Predictions predict(const Dataset& ds, const DatasetGraphs& graphs,
                    const training::ModelParams& params, const training::TrainConfig& cfg,
                    Split split) {
  std::vector<NodeId> targets(ds.grid.size());
  std::iota(targets.begin(), targets.end(), NodeId{0});
  Predictions p;
  p.keys = window_keys(ds.split, cfg.window, targets, split);
  const auto n = static_cast<Eigen::Index>(p.keys.size());
  p.pred.resize(n, kNumVariables);
  p.truth.resize(n, kNumVariables);
  p.persistence.resize(n, kNumVariables);
  const auto fwd = training::forward_config(cfg);
  const std::vector<bool> frozen(params.size(), false);
  training::parallel_for(static_cast<int>(n), cfg.jobs, [&](int i) {
    const WindowKey& key = p.keys[static_cast<std::size_t>(i)];
    const auto w = make_window(graphs, key, cfg.window, cfg.khop, false);
    ad::Tape tape;
    const auto b = model::bind(tape, params, frozen);
    ZeroNoise noise;
    const auto f = model::forecast(b, w, fwd, noise);
    const auto cell = static_cast<std::size_t>(key.target);
    for (int v = 0; v < kNumVariables; ++v) {
      p.pred(i, v) = ds.norm.from_z(v, f.prediction.value()(0, v));
      p.truth(i, v) = ds.states.cell_value(key.t_end + 1, cell, v);
      p.persistence(i, v) = ds.states.cell_value(key.t_end, cell, v);
    }
  });
  return p;
}

MetricsReport report(const Dataset& ds, const Predictions& p, Split split,
                     const EvalOptions& opt) {
  MetricsReport r;
  r.split = split == Split::kTrain ? "train" : split == Split::kVal ? "val" : "test";
  r.windows = p.keys.size();
  r.model = metrics(p.pred, p.truth);
  r.persistence = metrics(p.persistence, p.truth);
  r.vi_variable = opt.vi_variable;
  r.vi_length = opt.vi_length;
  if (opt.vi_variable < 0 || opt.vi_variable >= kNumVariables) {
    throw std::invalid_argument("report: vi_variable out of range");
  }
  if (ds.steps() < opt.vi_length) return r;

  std::map<NodeId, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < p.keys.size(); ++i) rows_of[p.keys[i].target].push_back(i);
  if (rows_of.size() < 4) return r;
  r.stratified = true;
  for (const auto& [id, rows] : rows_of) {
    r.nodes.push_back(id);
    std::array<double, kNumVariables> mae{};
    for (std::size_t row : rows) {
      for (int v = 0; v < kNumVariables; ++v) {
        mae[static_cast<std::size_t>(v)] +=
            std::abs(p.pred(static_cast<Eigen::Index>(row), v) -
                     p.truth(static_cast<Eigen::Index>(row), v));
      }
    }
    for (double& m : mae) m /= static_cast<double>(rows.size());
    r.node_mae.push_back(mae);
    std::vector<double> series;
    for (int t = ds.steps() - opt.vi_length; t < ds.steps(); ++t) {
      series.push_back(ds.states.cell_value(t, static_cast<std::size_t>(id), opt.vi_variable));
    }
    r.node_vi.push_back(variability_index(series, opt.vi_length));
  }
  r.node_group = stratify_nodes(r.node_vi, r.nodes);
  // Every node carries the same number of windows, so the node mean equals
  // the sample mean within each group.
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    GroupStats& g = r.node_group[i] == Group::kLow    ? r.low
                    : r.node_group[i] == Group::kHigh ? r.high
                                                      : r.none;
    ++g.nodes;
    for (std::size_t v = 0; v < kNumVariables; ++v) g.mae[v] += r.node_mae[i][v];
  }
  for (GroupStats* g : {&r.low, &r.high, &r.none}) {
    if (g->nodes == 0) continue;
    for (double& m : g->mae) m /= static_cast<double>(g->nodes);
  }
  return r;
}

double stratified_gap(const MetricsReport& r, const Normalization& norm) {
  if (!r.stratified) return NAN;
  double s = 0.0;
  for (int v = 0; v < kNumVariables; ++v) {
    const auto i = static_cast<std::size_t>(v);
    s += (r.high.mae[i] - r.low.mae[i]) / norm.stddev[i];
  }
  return s / kNumVariables;
}

double mean_r2(const std::vector<VariableMetrics>& m) {
  double s = 0.0;
  int n = 0;
  for (const auto& v : m) {
    if (v.r2) {
      s += *v.r2;
      ++n;
    }
  }
  return n ? s / n : NAN;
}

namespace {

json metrics_json(const std::vector<VariableMetrics>& m) {
  json out = json::object();
  for (std::size_t v = 0; v < m.size(); ++v) {
    out[kVariableNames[v]] = {{"rmse", m[v].rmse},
                              {"mae", m[v].mae},
                              {"r2", m[v].r2 ? json(*m[v].r2) : json(nullptr)}};
  }
  return out;
}

json group_json(const GroupStats& g) {
  json mae = json::object();
  for (std::size_t v = 0; v < kNumVariables; ++v) mae[kVariableNames[v]] = g.mae[v];
  return {{"nodes", g.nodes}, {"mae", mae}};
}

}  // namespace

json to_json(const MetricsReport& r, const std::string& evaluated) {
  json out = {{"format", "asgn-metrics"},
              {"version", 1},
              {"split", r.split},
              {"evaluated", evaluated},
              {"windows", r.windows},
              {"variables", {"U", "V", "T", "Q"}},
              {"metrics", metrics_json(r.model)},
              {"persistence", metrics_json(r.persistence)}};
  if (r.stratified) {
    json gap = json::object();
    for (std::size_t v = 0; v < kNumVariables; ++v) {
      gap[kVariableNames[v]] = r.high.mae[v] - r.low.mae[v];
    }
    out["stratification"] = {{"vi_variable", kVariableNames[r.vi_variable]},
                             {"vi_length", r.vi_length},
                             {"low", group_json(r.low)},
                             {"high", group_json(r.high)},
                             {"none", group_json(r.none)},
                             {"gap_high_minus_low", gap}};
  } else {
    out["stratification"] = nullptr;
  }
  return out;
}

void write_stratified_csv(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "node_id,group,vi,mae_U,mae_V,mae_T,mae_Q\n";
  char buf[256];
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const auto& m = r.node_mae[i];
    std::snprintf(buf, sizeof buf, "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.nodes[i]), to_string(r.node_group[i]).c_str(),
                  r.node_vi[i], m[0], m[1], m[2], m[3]);
    f << buf;
  }
}

// ---- experiments ----------------------------------------------------------------------

RunOutcome train_and_evaluate(const Dataset& ds, const training::TrainConfig& cfg,
                              const ExperimentOptions& opt) {
  auto say = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  training::FitOptions fo;
  if (opt.pretrain_epochs > 0) {
    training::TrainConfig pre = cfg;
    pre.phase = model::Phase::kPretrain;
    pre.epochs = opt.pretrain_epochs;
    say("pretrain " + model::to_string(cfg.variant) + " seed " + std::to_string(cfg.seed));
    const auto r = training::fit(ds, pre);
    fo.init = training::handoff(r.checkpoint.params, training::shape_for(cfg, ds.config), cfg.seed);
  }
  training::TrainConfig fine = cfg;
  fine.phase = model::Phase::kFinetune;
  say("finetune " + model::to_string(cfg.variant) + " seed " + std::to_string(cfg.seed));
  RunOutcome out;
  out.fit = training::fit(ds, fine, fo);
  const DatasetGraphs graphs(ds, RadiusOptions{cfg.radius_km, true});
  const auto p = predict(ds, graphs, out.fit.checkpoint.params, fine, Split::kTest);
  out.test = report(ds, p, Split::kTest, opt.eval);
  return out;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {NAN, NAN};
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace

std::vector<AblationRow> run_ablation(const Dataset& ds, const training::TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      const ExperimentOptions& opt) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  std::vector<AblationRow> rows;
  for (auto v : {model::Variant::kFull, model::Variant::kNoDistance, model::Variant::kFixedGraph}) {
    AblationRow row;
    row.variant = v;
    std::array<std::vector<double>, kNumVariables> r2;
    std::vector<double> gaps;
    for (std::uint64_t seed : seeds) {
      training::TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = seed;
      row.runs.push_back(train_and_evaluate(ds, cfg, opt));
      const auto& rep = row.runs.back().test;
      for (std::size_t k = 0; k < kNumVariables; ++k) r2[k].push_back(rep.model[k].r2.value_or(NAN));
      gaps.push_back(stratified_gap(rep, ds.norm));
    }
    for (std::size_t k = 0; k < kNumVariables; ++k) {
      std::tie(row.r2[k], row.r2_std[k]) = mean_std(r2[k]);
    }
    row.gap = mean_std(gaps).first;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "variant,learned_adjacency,distance,U,V,T,Q\n";
  char buf[256];
  for (const auto& r : rows) {
    const bool learned = r.variant != model::Variant::kFixedGraph;
    const bool dist = r.variant == model::Variant::kFull;
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                  model::to_string(r.variant).c_str(), learned ? 1 : 0, dist ? 1 : 0, r.r2[0],
                  r.r2[1], r.r2[2], r.r2[3]);
    f << buf;
  }
}

std::vector<SweepPoint> run_sensitivity(const Dataset& ds, const training::TrainConfig& base,
                                        const std::string& param, std::span<const double> values,
                                        std::span<const std::uint64_t> seeds,
                                        const ExperimentOptions& opt) {
  if (param != "tau" && param != "hidden") {
    throw std::invalid_argument("run_sensitivity: unknown parameter '" + param + "' (tau | hidden)");
  }
  if (seeds.empty()) throw std::invalid_argument("run_sensitivity: no seeds");
  std::vector<SweepPoint> out;
  for (double value : values) {
    std::vector<double> scores;
    for (std::uint64_t seed : seeds) {
      training::TrainConfig cfg = base;
      cfg.seed = seed;
      if (param == "tau") {
        cfg.tau = value;
      } else {
        cfg.hidden = static_cast<int>(std::lround(value));
      }
      scores.push_back(mean_r2(train_and_evaluate(ds, cfg, opt).test.model));
    }
    const auto [m, s] = mean_std(scores);
    out.push_back({param, value, m, s});
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepPoint>& pts, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "param,value,mean_r2,std_r2\n";
  char buf[256];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n", p.param.c_str(), p.value, p.mean_r2,
                  p.std_r2);
    f << buf;
  }
}

std::string sweep_svg(const std::vector<SweepPoint>& pts) {
  std::vector<std::string> params;
  for (const auto& p : pts) {
    if (std::find(params.begin(), params.end(), p.param) == params.end()) params.push_back(p.param);
  }
  constexpr double kW = 360, kH = 240, kPad = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW * std::max<std::size_t>(1, params.size())
    << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<SweepPoint> ps;
    for (const auto& p : pts) {
      if (p.param == params[k]) ps.push_back(p);
    }
    std::sort(ps.begin(), ps.end(), [](auto& a, auto& b) { return a.value < b.value; });
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : ps) {
      lo = std::min(lo, p.mean_r2 - p.std_r2);
      hi = std::max(hi, p.mean_r2 + p.std_r2);
    }
    if (!(hi > lo)) {
      lo -= 0.05;
      hi += 0.05;
    }
    const double x0 = kW * static_cast<double>(k);
    // Values are spread evenly by rank; the sweep grids are roughly geometric.
    auto px = [&](std::size_t i) {
      return x0 + kPad + (ps.size() > 1 ? (kW - 2 * kPad) * static_cast<double>(i) /
                                              static_cast<double>(ps.size() - 1)
                                        : (kW - 2 * kPad) / 2);
    };
    auto py = [&](double y) { return kH - kPad - (kH - 2 * kPad) * (y - lo) / (hi - lo); };
    s << "<g>\n<text x=\"" << x0 + kW / 2 << "\" y=\"16\" text-anchor=\"middle\">" << params[k]
      << "</text>\n";
    s << "<line x1=\"" << x0 + kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << x0 + kW - kPad
      << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
    if (!ps.empty()) {
      s << "<polygon fill=\"steelblue\" fill-opacity=\"0.25\" points=\"";
      for (std::size_t i = 0; i < ps.size(); ++i) {
        s << px(i) << "," << py(ps[i].mean_r2 + ps[i].std_r2) << " ";
      }
      for (std::size_t i = ps.size(); i-- > 0;) {
        s << px(i) << "," << py(ps[i].mean_r2 - ps[i].std_r2) << " ";
      }
      s << "\"/>\n<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < ps.size(); ++i) s << px(i) << "," << py(ps[i].mean_r2) << " ";
      s << "\"/>\n";
      for (std::size_t i = 0; i < ps.size(); ++i) {
        s << "<text x=\"" << px(i) << "\" y=\"" << kH - kPad + 14 << "\" text-anchor=\"middle\">"
          << ps[i].value << "</text>\n";
      }
    }
    char lab[64];
    std::snprintf(lab, sizeof lab, "%.3f", hi);
    s << "<text x=\"" << x0 + 4 << "\" y=\"" << kPad << "\">" << lab << "</text>\n";
    std::snprintf(lab, sizeof lab, "%.3f", lo);
    s << "<text x=\"" << x0 + 4 << "\" y=\"" << kH - kPad << "\">" << lab << "</text>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace asgn::eval
