// SPDX-License-Identifier: Apache-2.0
#include "asgn/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace asgn {

LatLon LatLon::normalized(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg) || lat_deg < -90.0 ||
      lat_deg > 90.0) {
    throw std::invalid_argument("LatLon: latitude out of [-90, 90]");
  }
  double lon = std::fmod(lon_deg + 180.0, 360.0);
  if (lon < 0.0) lon += 360.0;
  return LatLon{lat_deg, lon - 180.0};
}

std::optional<int> LocalSubgraph::local_of(NodeId id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) return std::nullopt;
  return static_cast<int>(it - ids.begin());
}

namespace {

bool loc_valid(const LatLon& p) {
  return p.lat_deg >= -90.0 && p.lat_deg <= 90.0 && p.lon_deg >= -180.0 && p.lon_deg < 180.0;
}

std::string edge_name(const Edge& e) {
  return "(" + std::to_string(e.first) + "," + std::to_string(e.second) + ")";
}

}  // namespace

std::vector<Violation> validate_snapshot(const GraphSnapshot& s, int grid_width) {
  std::vector<Violation> out;
  std::unordered_set<NodeId> ids;
  auto note_id = [&](NodeId id) {
    if (!ids.insert(id).second) out.push_back({"duplicate-id", std::to_string(id)});
  };

  for (const GridNode& g : s.grid) {
    note_id(g.id);
    if (g.id < 0 || g.id >= kObsIdBase) out.push_back({"grid-id-range", std::to_string(g.id)});
    if (!loc_valid(g.loc)) out.push_back({"bad-location", std::to_string(g.id)});
    if (static_cast<int>(g.features.size()) != grid_width) {
      out.push_back({"grid-feature-width", std::to_string(g.id)});
    }
  }
  for (const ObsNode& o : s.obs) {
    note_id(o.id);
    if (o.id < kObsIdBase) out.push_back({"obs-id-range", std::to_string(o.id)});
    if (!loc_valid(o.loc)) out.push_back({"bad-location", std::to_string(o.id)});
    if (o.mask.size() != o.features.size()) {
      out.push_back({"mask-length", std::to_string(o.id)});
    }
    if (std::none_of(o.mask.begin(), o.mask.end(), [](std::uint8_t m) { return m != 0; })) {
      out.push_back({"no-valid-channel", std::to_string(o.id)});
    }
  }

  std::set<std::pair<NodeId, NodeId>> seen;
  for (const Edge& e : s.edges) {
    for (NodeId end : {e.first, e.second}) {
      if (!ids.contains(end)) out.push_back({"dangling-edge", std::to_string(end)});
    }
    if (e.first == e.second) out.push_back({"self-edge", edge_name(e)});
    if (!seen.insert(std::minmax(e.first, e.second)).second) {
      out.push_back({"duplicate-edge", edge_name(e)});
    }
  }
  return out;
}

std::vector<Violation> validate_window(const SubgraphWindow& w, int m) {
  std::vector<Violation> out;
  if (static_cast<int>(w.snapshots.size()) != m) {
    out.push_back({"window-length", std::to_string(w.snapshots.size())});
  }
  for (const LocalSubgraph& g : w.snapshots) {
    const std::string step = "t=" + std::to_string(g.t);
    const auto n = g.ids.size();
    if (g.kind.size() != n || g.platform.size() != n || g.loc.size() != n ||
        g.features.size() != n || g.mask.size() != n) {
      out.push_back({"ragged-subgraph", step});
      continue;
    }
    if (g.target < 0 || static_cast<std::size_t>(g.target) >= n ||
        g.ids[static_cast<std::size_t>(g.target)] != w.target_id) {
      out.push_back({"target-missing", step});
    }
    std::unordered_set<NodeId> uniq(g.ids.begin(), g.ids.end());
    if (uniq.size() != n) out.push_back({"local-id-not-bijective", step});
    if (g.edge_km.size() != g.edges.size()) out.push_back({"edge-distance-count", step});
    for (const auto& [a, b] : g.edges) {
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n ||
          static_cast<std::size_t>(b) >= n || a >= b) {
        out.push_back({"bad-local-edge", step});
      }
    }
  }
  return out;
}

}  // namespace asgn
