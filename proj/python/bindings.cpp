// SPDX-License-Identifier: Apache-2.0
//
// Python access to the dataset generator, graph utilities, metrics and
// checkpoints. Configs cross the boundary as JSON strings so the Python side
// sees exactly the keys the CLI accepts.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "asgn/encoder.hpp"
#include "asgn/eval.hpp"
#include "asgn/graphbuild.hpp"
#include "asgn/run_config.hpp"
#include "asgn/structlearn.hpp"
#include "asgn/training.hpp"

namespace py = pybind11;
using namespace asgn;

namespace {

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  const auto& s = ds.states;
  py::array_t<double> states({s.steps, s.nx, s.ny, kNumVariables});
  std::copy(s.data.begin(), s.data.end(), states.mutable_data());
  d["states"] = states;
  std::vector<std::pair<double, double>> grid;
  for (const auto& g : ds.grid) grid.emplace_back(g.lat_deg, g.lon_deg);
  d["grid"] = grid;
  std::vector<std::size_t> obs;
  for (const auto& o : ds.obs) obs.push_back(o.size());
  d["obs_per_step"] = obs;
  d["split"] = py::make_tuple(ds.split.train_end, ds.split.val_end, ds.split.steps);
  d["mean"] = ds.norm.mean;
  d["stddev"] = ds.norm.stddev;
  d["config"] = to_json(ds.config).dump();
  return d;
}

py::list metrics_list(const std::vector<eval::VariableMetrics>& m) {
  py::list out;
  for (const auto& v : m) {
    py::dict d;
    d["rmse"] = v.rmse;
    d["mae"] = v.mae;
    d["r2"] = v.r2 ? py::object(py::float_(*v.r2)) : py::object(py::none());
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive graph-structure forecaster: core library bindings";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DatasetParseError>(m, "DatasetParseError", PyExc_ValueError);
  py::register_exception<training::CheckpointError>(m, "CheckpointError", PyExc_ValueError);

  m.attr("variables") = py::make_tuple("U", "V", "T", "Q");

  m.def(
      "default_config", [] { return to_json(RunConfig{}).dump(); },
      "Every config key with its default, as a JSON string.");

  m.def(
      "generate_dataset",
      [](const std::string& config_json) {
        const RunConfig rc = run_config_from_json(nlohmann::json::parse(config_json));
        Dataset ds;
        {
          py::gil_scoped_release release;
          ds = generate_dataset(rc.sim);
        }
        return dataset_dict(ds);
      },
      py::arg("config_json") = "{}",
      "Simulate a dataset from a JSON run config; returns arrays and metadata.");

  m.def(
      "simulate_to",
      [](const std::string& config_json, const std::filesystem::path& out) {
        const RunConfig rc = run_config_from_json(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        write_dataset(generate_dataset(rc.sim), out);
      },
      py::arg("config_json"), py::arg("out"), "Simulate and write a dataset directory.");

  m.def(
      "read_dataset", [](const std::filesystem::path& dir) { return dataset_dict(read_dataset(dir)); },
      py::arg("dir"));

  m.def(
      "haversine_km",
      [](double lat1, double lon1, double lat2, double lon2) {
        return haversine_km({lat1, lon1}, {lat2, lon2});
      },
      py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

  m.def(
      "radius_edges",
      [](const std::vector<std::pair<double, double>>& points, double radius_km) {
        std::vector<PlacedNode> nodes;
        for (std::size_t i = 0; i < points.size(); ++i) {
          nodes.push_back({static_cast<NodeId>(i), LatLon::normalized(points[i].first, points[i].second),
                           NodeKind::kGrid});
        }
        const EdgeList e = build_radius_edges(nodes, {radius_km, true});
        return py::make_tuple(e.pairs, e.km);
      },
      py::arg("points"), py::arg("radius_km") = 50.0,
      "Index pairs within the radius of (lat, lon) points, and their distances.");

  m.def("normalize_adjacency", &encoder::normalize_adjacency, py::arg("a"),
        "D^-1/2 (A + I) D^-1/2 of a symmetric 0/1 matrix.");

  m.def(
      "gumbel_softmax_sample",
      [](const std::vector<double>& p, double tau, std::uint64_t seed) {
        SeededNoise noise(seed);
        return structlearn::gumbel_softmax_sample(p, tau, noise);
      },
      py::arg("p"), py::arg("tau"), py::arg("seed"));

  m.def("integer_degree", &structlearn::integer_degree, py::arg("k"), py::arg("candidates"));

  m.def(
      "metrics",
      [](const eval::Matrix& pred, const eval::Matrix& truth) {
        return metrics_list(eval::metrics(pred, truth));
      },
      py::arg("pred"), py::arg("truth"), "Per-column RMSE, MAE and R^2 (None when undefined).");

  m.def(
      "variability_index",
      [](const std::vector<double>& s, int length) { return eval::variability_index(s, length); },
      py::arg("series"), py::arg("length") = 24);

  m.def(
      "stratify",
      [](const std::vector<double>& vi) {
        std::vector<std::string> out;
        for (auto g : eval::stratify_nodes(vi)) out.push_back(eval::to_string(g));
        return out;
      },
      py::arg("vi"), "'low' / 'high' / 'none' label per node.");

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        const auto c = training::load_checkpoint(path);
        py::dict tensors;
        for (const auto& t : c.params.tensors()) tensors[py::str(t.name)] = t.value;
        py::dict d;
        d["epoch"] = c.epoch;
        d["seed"] = c.seed;
        d["config"] = c.config.dump();
        d["tensors"] = tensors;
        return d;
      },
      py::arg("path"));

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::string& config_json) {
        const RunConfig rc = run_config_from_json(nlohmann::json::parse(config_json));
        const Dataset ds = read_dataset(data);
        training::FitResult r;
        {
          py::gil_scoped_release release;
          r = training::fit(ds, rc.train);
        }
        std::vector<std::tuple<int, double, double>> curve;
        for (const auto& e : r.curve) curve.emplace_back(e.epoch, e.train, e.val);
        return py::make_tuple(curve, r.best_epoch, r.diverged);
      },
      py::arg("data"), py::arg("config_json") = "{}",
      "Fit on a dataset directory; returns (epoch, train, val) rows, best epoch, diverged.");
}
