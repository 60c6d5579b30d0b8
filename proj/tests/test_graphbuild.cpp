// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numbers>
#include <set>

#include "doctest.h"

#include "asgn/graphbuild.hpp"
#include "oracles.hpp"

using namespace asgn;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.grid_nx = 6;
  c.grid_ny = 6;
  c.lat_max = 32.4;
  c.lon_max = 122.4;
  c.steps = 12;
  for (auto& p : c.platforms) p.count = 3;
  return c;
}

}  // namespace

TEST_CASE("graph worked examples agree with the oracles") {
  for (const auto& c : oracle::worked_examples()) {
    if (c.name.rfind("graphbuild:", 0) != 0) continue;
    INFO(c.name << ": " << c.detail);
    CHECK(c.pass);
  }
}

TEST_CASE("radius edges and k-hop subgraphs match brute force on random snapshots") {
  const auto c = oracle::graph_suite(40, 99);
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("emitted windows match the BFS oracle") {
  const auto c = oracle::window_suite(5);
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("haversine is symmetric and zero on the diagonal") {
  const LatLon a{31.0, 121.5}, b{33.2, 125.0};
  CHECK(haversine_km(a, b) == doctest::Approx(haversine_km(b, a)));
  CHECK(haversine_km(a, a) == 0.0);
  CHECK(haversine_km({0.0, 179.9}, {0.0, -179.9}) == doctest::Approx(22.239).epsilon(1e-3));
}

TEST_CASE("obs-obs pairs are dropped when disabled") {
  std::vector<PlacedNode> nodes{{0, {30.0, 120.0}, NodeKind::kGrid},
                                {kObsIdBase, {30.05, 120.0}, NodeKind::kObs},
                                {kObsIdBase + 1, {30.1, 120.0}, NodeKind::kObs}};
  const EdgeList with = build_radius_edges(nodes, {50.0, true});
  const EdgeList without = build_radius_edges(nodes, {50.0, false});
  CHECK(with.size() == 3);
  CHECK(without.size() == 2);
  for (const Edge& e : without.pairs) CHECK(e.first == 0);
}

TEST_CASE("k-hop node sets grow monotonically and k = 0 is the target alone") {
  const Dataset ds = generate_dataset(small_config());
  const DatasetGraphs graphs(ds, {50.0, true});
  const NodeId target = graphs.grid_ids()[14];
  std::set<NodeId> prev;
  for (int k = 0; k <= 4; ++k) {
    const KhopResult r = khop_subgraph(graphs.at(3), target, k);
    REQUIRE(!r.nodes.empty());
    CHECK(r.nodes.front() == target);
    if (k == 0) CHECK(r.nodes.size() == 1);
    const std::set<NodeId> cur(r.nodes.begin(), r.nodes.end());
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    CHECK(std::is_sorted(r.edges.begin(), r.edges.end()));
    for (const Edge& e : r.edges) {
      CHECK(cur.contains(e.first));
      CHECK(cur.contains(e.second));
    }
    prev = cur;
  }
}

TEST_CASE("window keys cover [m-1, steps-2] target-major and split by label step") {
  const std::vector<NodeId> targets{3, 8};
  const auto keys = window_keys(10, 4, targets);
  REQUIRE(keys.size() == 12);
  CHECK(keys.front() == WindowKey{3, 3});
  CHECK(keys[5] == WindowKey{3, 8});
  CHECK(keys[6] == WindowKey{8, 3});
  CHECK_THROWS_AS(window_keys(4, 4, targets), ConfigError);

  const SplitBounds split = chronological_split(20);
  std::size_t total = 0;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (const auto& k : window_keys(split, 4, targets, s)) {
      const int label = k.t_end + 1;
      if (s == Split::kTrain) CHECK(label < split.train_end);
      if (s == Split::kVal) CHECK((label >= split.train_end && label < split.val_end));
      if (s == Split::kTest) CHECK(label >= split.val_end);
      ++total;
    }
  }
  CHECK(total == window_keys(20, 4, targets).size());
}

TEST_CASE("windows carry m valid steps and the next-step label") {
  const Dataset ds = generate_dataset(small_config());
  const DatasetGraphs graphs(ds, {50.0, true});
  const NodeId target = graphs.grid_ids()[7];
  const SubgraphWindow w = make_window(graphs, {target, 5}, 3, 2);
  CHECK(validate_window(w, 3).empty());
  REQUIRE(w.target_next.has_value());
  for (int v = 0; v < kNumVariables; ++v) {
    CHECK((*w.target_next)[v] ==
          doctest::Approx(ds.norm.to_z(v, ds.states.cell_value(6, static_cast<std::size_t>(target), v))));
  }
  CHECK_FALSE(make_window(graphs, {target, 5}, 3, 2, false).target_next.has_value());
  for (std::size_t i = 0; i < w.snapshots.size(); ++i) {
    const LocalSubgraph& g = w.snapshots[i];
    CHECK(g.t == 3 + static_cast<int>(i));
    CHECK(g.ids[static_cast<std::size_t>(g.target)] == target);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto [a, b] = g.edges[e];
      CHECK(a < b);
      CHECK(g.edge_km[e] == doctest::Approx(haversine_km(g.loc[a], g.loc[b])));
      CHECK(g.edge_km[e] <= 50.0);
    }
  }
}

TEST_CASE("distance and radius rule boundary cases") {
  CHECK(haversine_km({12.0, 34.0}, {12.0, 34.0}) == 0.0);
  CHECK(haversine_km({0.0, 0.0}, {0.0, 180.0}) == doctest::Approx(20015.09).epsilon(1e-6));
  // 1 degree of latitude is 111.195 km; scale to 49 and 51 km.
  const double deg_per_km = 1.0 / (kEarthRadiusKm * std::numbers::pi / 180.0);
  for (auto [km, edges] : {std::pair{49.0, 1u}, std::pair{51.0, 0u}}) {
    const std::vector<PlacedNode> nodes{{0, {10.0, 20.0}, NodeKind::kGrid},
                                        {1, {10.0 + km * deg_per_km, 20.0}, NodeKind::kGrid}};
    CHECK(build_radius_edges(nodes, {50.0, true}).size() == edges);
  }
}

TEST_CASE("an isolated target yields only itself for any k") {
  GraphSnapshot s;
  s.grid.push_back({0, {10.0, 20.0}, {0, 0, 0, 0}});
  s.grid.push_back({1, {10.0, 25.0}, {0, 0, 0, 0}});
  const SnapshotGraph g(s, {50.0, true});
  for (int k : {0, 1, 3}) {
    const auto r = khop_subgraph(g, 0, k);
    CHECK(r.nodes == std::vector<NodeId>{0});
    CHECK(r.edges.empty());
  }
}

TEST_CASE("window counts follow steps - m") {
  const std::vector<NodeId> targets{0, 1, 2};
  CHECK(window_keys(9, 8, targets).size() == 3);
  CHECK(window_keys(11, 8, targets).size() == 9);
}
