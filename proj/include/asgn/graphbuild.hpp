// SPDX-License-Identifier: Apache-2.0
//
// Initial distance-based edges and k-hop subgraph windows.
#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "asgn/datamodel.hpp"
#include "asgn/synthgen.hpp"

namespace asgn {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in kilometres.
double haversine_km(const LatLon& a, const LatLon& b);

struct PlacedNode {
  NodeId id = 0;
  LatLon loc;
  NodeKind kind = NodeKind::kGrid;
};

/// Sorted undirected pairs (first < second) with their distances.
struct EdgeList {
  std::vector<Edge> pairs;
  std::vector<double> km;
  std::size_t size() const { return pairs.size(); }
};

struct RadiusOptions {
  double radius_km = 50.0;
  /// Whether observation-observation pairs are connected.
  bool obs_obs = true;
};

/// All pairs within the radius, found through a lat/lon bucket index.
EdgeList build_radius_edges(std::span<const PlacedNode> nodes, const RadiusOptions& opt);

std::vector<PlacedNode> placed_nodes(const GraphSnapshot& s);

/// Snapshot plus an adjacency index for BFS.
class SnapshotGraph {
 public:
  SnapshotGraph() = default;
  /// Computes radius edges for `s` (replacing any it carries).
  SnapshotGraph(GraphSnapshot s, const RadiusOptions& opt);
  /// Uses the edges already stored in `s`.
  explicit SnapshotGraph(GraphSnapshot s);

  const GraphSnapshot& snapshot() const { return snap_; }
  std::size_t node_count() const { return ids_.size(); }
  /// Position of an id in the concatenated [grid..., obs...] order.
  std::optional<int> index_of(NodeId id) const;
  NodeId id_at(int index) const { return ids_[static_cast<std::size_t>(index)]; }
  const std::vector<std::pair<int, double>>& neighbors(int index) const {
    return adj_[static_cast<std::size_t>(index)];
  }

 private:
  void index_edges(const std::vector<double>* km);

  GraphSnapshot snap_;
  std::vector<NodeId> ids_;
  std::unordered_map<NodeId, int> pos_;
  std::vector<std::vector<std::pair<int, double>>> adj_;  // (neighbor, km), sorted
};

/// Node ids within k hops of `target` and the edges among them. Nodes are in
/// BFS discovery order (target first); edges are sorted id pairs.
struct KhopResult {
  std::vector<NodeId> nodes;
  std::vector<Edge> edges;
};
KhopResult khop_subgraph(const SnapshotGraph& g, NodeId target, int k);

/// Same subgraph re-indexed locally, carrying features and edge distances.
LocalSubgraph local_khop(const SnapshotGraph& g, NodeId target, int k);

struct WindowKey {
  NodeId target = 0;
  int t_end = 0;  // last input step; label at t_end + 1
  bool operator==(const WindowKey&) const = default;
};

enum class Split { kTrain, kVal, kTest };

/// One key per (target, t_end) with t_end in [m-1, steps-2], target-major.
/// Throws ConfigError when steps < m + 1.
std::vector<WindowKey> window_keys(int steps, int m, std::span<const NodeId> targets);
/// Keys whose label step falls in the given chronological split.
std::vector<WindowKey> window_keys(const SplitBounds& split, int m,
                                   std::span<const NodeId> targets, Split which);

/// Per-step graphs for a whole dataset.
class DatasetGraphs {
 public:
  DatasetGraphs(const Dataset& ds, const RadiusOptions& opt);
  const Dataset& dataset() const { return *ds_; }
  const SnapshotGraph& at(int t) const { return graphs_[static_cast<std::size_t>(t)]; }
  int steps() const { return static_cast<int>(graphs_.size()); }
  std::vector<NodeId> grid_ids() const;

 private:
  const Dataset* ds_;
  std::vector<SnapshotGraph> graphs_;
};

/// Materialises one window: m per-step k-hop subgraphs ending at key.t_end and,
/// when `with_label`, the z-scored target state at t_end + 1.
SubgraphWindow make_window(const DatasetGraphs& graphs, const WindowKey& key, int m, int k,
                           bool with_label = true);

/// All windows for the given targets, in window_keys order.
std::vector<SubgraphWindow> build_windows(const DatasetGraphs& graphs, int m, int k,
                                          std::span<const NodeId> targets);

}  // namespace asgn
