// SPDX-License-Identifier: Apache-2.0
//
// Core domain types: grid and observation nodes, per-step graph snapshots and
// the per-target subgraph windows that form the unit of training.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace asgn {

using NodeId = std::int64_t;

/// Observation ids start here; grid ids occupy [0, kObsIdBase).
inline constexpr NodeId kObsIdBase = 1'000'000'000;

/// Number of physical variables carried by every node (U, V, T, Q).
inline constexpr int kNumVariables = 4;
inline constexpr const char* kVariableNames[kNumVariables] = {"U", "V", "T", "Q"};

struct LatLon {
  double lat_deg = 0.0;
  double lon_deg = 0.0;

  /// Wraps longitude into [-180, 180) and checks latitude bounds.
  static LatLon normalized(double lat_deg, double lon_deg);
  bool operator==(const LatLon&) const = default;
};

struct GridNode {
  NodeId id = 0;
  LatLon loc;
  std::vector<double> features;  // kNumVariables values, z-scored
  bool operator==(const GridNode&) const = default;
};

struct ObsNode {
  NodeId id = 0;
  LatLon loc;
  int platform = 0;
  std::vector<double> features;  // padded to kNumVariables
  std::vector<std::uint8_t> mask;  // 1 = channel reported
  bool operator==(const ObsNode&) const = default;
};

using Edge = std::pair<NodeId, NodeId>;

struct GraphSnapshot {
  int t = 0;
  std::vector<GridNode> grid;
  std::vector<ObsNode> obs;
  std::vector<Edge> edges;  // undirected, each pair stored once
  bool operator==(const GraphSnapshot&) const = default;
};

struct Violation {
  std::string rule;  // e.g. "dangling-edge"
  std::string subject;  // node or edge it applies to
  bool operator==(const Violation&) const = default;
};

/// Checks every GraphSnapshot invariant; returns an empty list when valid.
std::vector<Violation> validate_snapshot(const GraphSnapshot& s,
                                         int grid_width = kNumVariables);

enum class NodeKind : std::uint8_t { kGrid, kObs };

/// One time step of a k-hop subgraph, re-indexed to local ids 0..n-1.
struct LocalSubgraph {
  int t = 0;
  std::vector<NodeId> ids;  // local index -> original id
  std::vector<NodeKind> kind;
  std::vector<int> platform;  // -1 for grid rows
  std::vector<LatLon> loc;
  std::vector<std::vector<double>> features;
  std::vector<std::vector<std::uint8_t>> mask;
  std::vector<std::pair<int, int>> edges;  // local (a, b) with a < b
  std::vector<double> edge_km;
  int target = 0;  // local index of the window target

  std::size_t size() const { return ids.size(); }
  /// Local index for an original id, if present.
  std::optional<int> local_of(NodeId id) const;
};

struct SubgraphWindow {
  NodeId target_id = 0;
  int t_end = 0;  // last input step; the label is step t_end + 1
  std::vector<LocalSubgraph> snapshots;
  std::optional<std::vector<double>> target_next;
};

/// Structural checks on a window: m snapshots, target present in each, local
/// id table is a bijection.
std::vector<Violation> validate_window(const SubgraphWindow& w, int m);

}  // namespace asgn
