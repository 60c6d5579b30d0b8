// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "doctest.h"

#include "asgn/datamodel.hpp"

using namespace asgn;

namespace {

GraphSnapshot valid_snapshot() {
  GraphSnapshot s;
  s.t = 3;
  s.grid.push_back({0, {30.0, 120.0}, {0.1, 0.2, 0.3, 0.4}});
  s.grid.push_back({1, {30.2, 120.0}, {0.0, 0.0, 0.0, 0.0}});
  s.obs.push_back({kObsIdBase + 5, {30.1, 120.1}, 2, {1.0, 0.0, 0.0, 0.0}, {1, 0, 0, 0}});
  s.edges = {{0, 1}, {1, kObsIdBase + 5}};
  return s;
}

bool has_rule(const std::vector<Violation>& v, const std::string& rule) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule; });
}

}  // namespace

TEST_CASE("longitude wraps into [-180, 180) and latitude is bounded") {
  CHECK(LatLon::normalized(10.0, 190.0).lon_deg == doctest::Approx(-170.0));
  CHECK(LatLon::normalized(10.0, -180.0).lon_deg == doctest::Approx(-180.0));
  CHECK(LatLon::normalized(10.0, 180.0).lon_deg == doctest::Approx(-180.0));
  CHECK(LatLon::normalized(10.0, 725.0).lon_deg == doctest::Approx(5.0));
  CHECK_THROWS(LatLon::normalized(91.0, 0.0));
}

TEST_CASE("a well-formed snapshot has no violations") {
  CHECK(validate_snapshot(valid_snapshot()).empty());
}

TEST_CASE("snapshot invariants are each reported by name") {
  {
    auto s = valid_snapshot();
    s.edges.push_back({0, 77});
    CHECK(has_rule(validate_snapshot(s), "dangling-edge"));
  }
  {
    auto s = valid_snapshot();
    s.edges.push_back({1, 1});
    CHECK(has_rule(validate_snapshot(s), "self-edge"));
  }
  {
    auto s = valid_snapshot();
    s.edges.push_back({1, 0});
    CHECK(has_rule(validate_snapshot(s), "duplicate-edge"));
  }
  {
    auto s = valid_snapshot();
    s.grid[1].id = 0;
    CHECK(has_rule(validate_snapshot(s), "duplicate-id"));
  }
  {
    auto s = valid_snapshot();
    s.obs[0].id = 12;
    CHECK(has_rule(validate_snapshot(s), "obs-id-range"));
  }
  {
    auto s = valid_snapshot();
    s.grid[0].features.pop_back();
    CHECK(has_rule(validate_snapshot(s), "grid-feature-width"));
  }
  {
    auto s = valid_snapshot();
    s.obs[0].mask = {0, 0, 0, 0};
    CHECK(has_rule(validate_snapshot(s), "no-valid-channel"));
  }
  {
    auto s = valid_snapshot();
    s.obs[0].mask = {1, 0};
    CHECK(has_rule(validate_snapshot(s), "mask-length"));
  }
}

TEST_CASE("window validation checks length, target presence and local ids") {
  LocalSubgraph g;
  g.ids = {4, 9};
  g.kind = {NodeKind::kGrid, NodeKind::kGrid};
  g.platform = {-1, -1};
  g.loc = {{30.0, 120.0}, {30.1, 120.0}};
  g.features = {{0, 0, 0, 0}, {0, 0, 0, 0}};
  g.mask = {{1, 1, 1, 1}, {1, 1, 1, 1}};
  g.edges = {{0, 1}};
  g.edge_km = {11.1};
  g.target = 0;
  SubgraphWindow w;
  w.target_id = 4;
  w.t_end = 1;
  w.snapshots = {g, g};
  CHECK(validate_window(w, 2).empty());
  CHECK(has_rule(validate_window(w, 3), "window-length"));

  auto dup = w;
  dup.snapshots[1].ids = {4, 4};
  CHECK(has_rule(validate_window(dup, 2), "local-id-not-bijective"));

  auto missing = w;
  missing.snapshots[0].ids = {5, 9};
  CHECK(has_rule(validate_window(missing, 2), "target-missing"));

  auto km = w;
  km.snapshots[0].edge_km.clear();
  CHECK(has_rule(validate_window(km, 2), "edge-distance-count"));
}

TEST_CASE("local_of maps original ids back to local indices") {
  LocalSubgraph g;
  g.ids = {7, kObsIdBase + 2, 3};
  CHECK(g.local_of(kObsIdBase + 2) == 1);
  CHECK(g.local_of(3) == 2);
  CHECK_FALSE(g.local_of(8).has_value());
}

TEST_CASE("an empty snapshot is valid and a dangling endpoint is named") {
  CHECK(validate_snapshot(GraphSnapshot{}).empty());
  auto s = valid_snapshot();
  s.edges.push_back({0, 99});
  const auto v = validate_snapshot(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == Violation{"dangling-edge", "99"});
}
