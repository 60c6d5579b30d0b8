// SPDX-License-Identifier: Apache-2.0
#include "asgn/graphbuild.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <stdexcept>

namespace asgn {

double haversine_km(const LatLon& a, const LatLon& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (b.lat_deg - a.lat_deg) * kRad;
  const double dlon = (b.lon_deg - a.lon_deg) * kRad;
  const double s1 = std::sin(dlat / 2.0), s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat_deg * kRad) * std::cos(b.lat_deg * kRad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

namespace {

bool keep_pair(const PlacedNode& a, const PlacedNode& b, const RadiusOptions& opt) {
  return opt.obs_obs || a.kind != NodeKind::kObs || b.kind != NodeKind::kObs;
}

void push_pair(EdgeList& out, const PlacedNode& a, const PlacedNode& b, double km) {
  out.pairs.emplace_back(std::min(a.id, b.id), std::max(a.id, b.id));
  out.km.push_back(km);
}

void sort_edges(EdgeList& e) {
  std::vector<std::size_t> order(e.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return e.pairs[x] < e.pairs[y]; });
  EdgeList sorted;
  sorted.pairs.reserve(order.size());
  sorted.km.reserve(order.size());
  for (std::size_t i : order) {
    sorted.pairs.push_back(e.pairs[i]);
    sorted.km.push_back(e.km[i]);
  }
  e = std::move(sorted);
}

EdgeList all_pairs(std::span<const PlacedNode> nodes, const RadiusOptions& opt) {
  EdgeList out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (!keep_pair(nodes[i], nodes[j], opt)) continue;
      const double d = haversine_km(nodes[i].loc, nodes[j].loc);
      if (d <= opt.radius_km && nodes[i].id != nodes[j].id) push_pair(out, nodes[i], nodes[j], d);
    }
  }
  return out;
}

}  // namespace

EdgeList build_radius_edges(std::span<const PlacedNode> nodes, const RadiusOptions& opt) {
  if (!(opt.radius_km > 0.0)) throw std::invalid_argument("build_radius_edges: radius_km <= 0");

  constexpr double kKmPerDeg = kEarthRadiusKm * std::numbers::pi / 180.0;
  double max_abs_lat = 0.0;
  for (const auto& n : nodes) max_abs_lat = std::max(max_abs_lat, std::abs(n.loc.lat_deg));
  const double lat_cell = opt.radius_km / kKmPerDeg;
  // A cell at the most poleward latitude must still span the radius in longitude.
  const double cos_lat = std::cos((max_abs_lat + lat_cell) * std::numbers::pi / 180.0);
  const double lon_cell = cos_lat > 1e-3 ? opt.radius_km / (kKmPerDeg * cos_lat) : 360.0;
  const int lon_cells = static_cast<int>(std::floor(360.0 / lon_cell));
  if (nodes.size() < 64 || lon_cells < 3 || lat_cell >= 60.0) {
    EdgeList out = all_pairs(nodes, opt);
    sort_edges(out);
    return out;
  }

  auto lat_key = [&](const LatLon& p) {
    return static_cast<int>(std::floor((p.lat_deg + 90.0) / lat_cell));
  };
  auto lon_key = [&](const LatLon& p) {
    // lon_cells columns each at least lon_cell wide; the last absorbs the slack.
    return std::min(lon_cells - 1,
                    static_cast<int>(std::floor((p.lon_deg + 180.0) / (360.0 / lon_cells))));
  };
  std::unordered_map<long long, std::vector<int>> buckets;
  auto bucket_id = [&](int la, int lo) { return static_cast<long long>(la) * 1'000'003LL + lo; };
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    buckets[bucket_id(lat_key(nodes[i].loc), lon_key(nodes[i].loc))].push_back(
        static_cast<int>(i));
  }

  EdgeList out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int la = lat_key(nodes[i].loc), lo = lon_key(nodes[i].loc);
    for (int dla = -1; dla <= 1; ++dla) {
      for (int dlo = -1; dlo <= 1; ++dlo) {
        const int col = ((lo + dlo) % lon_cells + lon_cells) % lon_cells;
        const auto it = buckets.find(bucket_id(la + dla, col));
        if (it == buckets.end()) continue;
        for (int j : it->second) {
          if (static_cast<std::size_t>(j) <= i) continue;
          if (!keep_pair(nodes[i], nodes[j], opt) || nodes[i].id == nodes[j].id) continue;
          const double d = haversine_km(nodes[i].loc, nodes[j].loc);
          if (d <= opt.radius_km) push_pair(out, nodes[i], nodes[j], d);
        }
      }
    }
  }
  sort_edges(out);
  // Narrow domains can make a column its own neighbour twice; drop repeats.
  EdgeList dedup;
  for (std::size_t e = 0; e < out.size(); ++e) {
    if (e > 0 && out.pairs[e] == out.pairs[e - 1]) continue;
    dedup.pairs.push_back(out.pairs[e]);
    dedup.km.push_back(out.km[e]);
  }
  return dedup;
}

std::vector<PlacedNode> placed_nodes(const GraphSnapshot& s) {
  std::vector<PlacedNode> out;
  out.reserve(s.grid.size() + s.obs.size());
  for (const auto& g : s.grid) out.push_back({g.id, g.loc, NodeKind::kGrid});
  for (const auto& o : s.obs) out.push_back({o.id, o.loc, NodeKind::kObs});
  return out;
}

// ---- SnapshotGraph ----------------------------------------------------------------

SnapshotGraph::SnapshotGraph(GraphSnapshot s, const RadiusOptions& opt) : snap_(std::move(s)) {
  const auto nodes = placed_nodes(snap_);
  EdgeList edges = build_radius_edges(nodes, opt);
  snap_.edges = edges.pairs;
  index_edges(&edges.km);
}

SnapshotGraph::SnapshotGraph(GraphSnapshot s) : snap_(std::move(s)) { index_edges(nullptr); }

void SnapshotGraph::index_edges(const std::vector<double>* km) {
  ids_.clear();
  pos_.clear();
  for (const auto& g : snap_.grid) ids_.push_back(g.id);
  for (const auto& o : snap_.obs) ids_.push_back(o.id);
  for (std::size_t i = 0; i < ids_.size(); ++i) pos_[ids_[i]] = static_cast<int>(i);
  std::vector<LatLon> locs;
  for (const auto& g : snap_.grid) locs.push_back(g.loc);
  for (const auto& o : snap_.obs) locs.push_back(o.loc);

  adj_.assign(ids_.size(), {});
  for (std::size_t e = 0; e < snap_.edges.size(); ++e) {
    const auto [a, b] = snap_.edges[e];
    const auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) throw std::invalid_argument("SnapshotGraph: edge endpoint missing");
    const double d = km ? (*km)[e] : haversine_km(locs[*ia], locs[*ib]);
    adj_[static_cast<std::size_t>(*ia)].emplace_back(*ib, d);
    adj_[static_cast<std::size_t>(*ib)].emplace_back(*ia, d);
  }
  for (auto& list : adj_) std::sort(list.begin(), list.end());
}

std::optional<int> SnapshotGraph::index_of(NodeId id) const {
  const auto it = pos_.find(id);
  if (it == pos_.end()) return std::nullopt;
  return it->second;
}

// ---- k-hop ------------------------------------------------------------------------

namespace {

/// BFS order of node indices within k hops of `root`.
std::vector<int> bfs_within(const SnapshotGraph& g, int root, int k) {
  std::vector<int> order{root};
  std::unordered_map<int, int> depth{{root, 0}};
  for (std::size_t head = 0; head < order.size(); ++head) {
    const int u = order[head];
    const int du = depth[u];
    if (du == k) continue;
    for (const auto& [v, km] : g.neighbors(u)) {
      if (depth.emplace(v, du + 1).second) order.push_back(v);
    }
  }
  return order;
}

}  // namespace

KhopResult khop_subgraph(const SnapshotGraph& g, NodeId target, int k) {
  const auto root = g.index_of(target);
  if (!root) throw std::out_of_range("khop_subgraph: target " + std::to_string(target) +
                                     " not in snapshot");
  if (k < 0) throw std::invalid_argument("khop_subgraph: negative k");
  const std::vector<int> order = bfs_within(g, *root, k);
  std::unordered_map<int, bool> in;
  for (int u : order) in[u] = true;

  KhopResult r;
  for (int u : order) r.nodes.push_back(g.id_at(u));
  for (int u : order) {
    for (const auto& [v, km] : g.neighbors(u)) {
      if (in.contains(v) && g.id_at(u) < g.id_at(v)) r.edges.emplace_back(g.id_at(u), g.id_at(v));
    }
  }
  std::sort(r.edges.begin(), r.edges.end());
  return r;
}

LocalSubgraph local_khop(const SnapshotGraph& g, NodeId target, int k) {
  const auto root = g.index_of(target);
  if (!root) throw std::out_of_range("local_khop: target " + std::to_string(target) +
                                     " not in snapshot");
  const std::vector<int> order = bfs_within(g, *root, k);
  std::unordered_map<int, int> local;
  for (std::size_t i = 0; i < order.size(); ++i) local[order[i]] = static_cast<int>(i);

  const GraphSnapshot& s = g.snapshot();
  const auto n_grid = static_cast<int>(s.grid.size());
  LocalSubgraph out;
  out.t = s.t;
  out.target = 0;
  for (int u : order) {
    out.ids.push_back(g.id_at(u));
    if (u < n_grid) {
      const GridNode& gn = s.grid[static_cast<std::size_t>(u)];
      out.kind.push_back(NodeKind::kGrid);
      out.platform.push_back(-1);
      out.loc.push_back(gn.loc);
      out.features.push_back(gn.features);
      out.mask.emplace_back(gn.features.size(), 1);
    } else {
      const ObsNode& on = s.obs[static_cast<std::size_t>(u - n_grid)];
      out.kind.push_back(NodeKind::kObs);
      out.platform.push_back(on.platform);
      out.loc.push_back(on.loc);
      out.features.push_back(on.features);
      out.mask.push_back(on.mask);
    }
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (const auto& [v, km] : g.neighbors(order[i])) {
      const auto it = local.find(v);
      if (it == local.end() || it->second <= static_cast<int>(i)) continue;
      out.edges.emplace_back(static_cast<int>(i), it->second);
      out.edge_km.push_back(km);
    }
  }
  return out;
}

// ---- windows ----------------------------------------------------------------------

std::vector<WindowKey> window_keys(int steps, int m, std::span<const NodeId> targets) {
  if (m < 1) throw ConfigError("window length m must be >= 1");
  if (steps < m + 1) {
    throw ConfigError("dataset has " + std::to_string(steps) + " steps; window " +
                      std::to_string(m) + " needs at least " + std::to_string(m + 1));
  }
  std::vector<WindowKey> keys;
  keys.reserve(targets.size() * static_cast<std::size_t>(steps - m));
  for (NodeId target : targets) {
    for (int t = m - 1; t <= steps - 2; ++t) keys.push_back({target, t});
  }
  return keys;
}

std::vector<WindowKey> window_keys(const SplitBounds& split, int m,
                                   std::span<const NodeId> targets, Split which) {
  std::vector<WindowKey> out;
  for (const WindowKey& k : window_keys(split.steps, m, targets)) {
    const int label = k.t_end + 1;
    const Split s = label < split.train_end ? Split::kTrain
                    : label < split.val_end ? Split::kVal
                                            : Split::kTest;
    if (s == which) out.push_back(k);
  }
  return out;
}

DatasetGraphs::DatasetGraphs(const Dataset& ds, const RadiusOptions& opt) : ds_(&ds) {
  graphs_.reserve(static_cast<std::size_t>(ds.steps()));
  for (int t = 0; t < ds.steps(); ++t) graphs_.emplace_back(make_snapshot(ds, t), opt);
}

std::vector<NodeId> DatasetGraphs::grid_ids() const {
  std::vector<NodeId> ids(ds_->grid.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<NodeId>(i);
  return ids;
}

SubgraphWindow make_window(const DatasetGraphs& graphs, const WindowKey& key, int m, int k,
                           bool with_label) {
  if (key.t_end - m + 1 < 0 || key.t_end >= graphs.steps()) {
    throw std::out_of_range("make_window: window outside dataset");
  }
  SubgraphWindow w;
  w.target_id = key.target;
  w.t_end = key.t_end;
  for (int t = key.t_end - m + 1; t <= key.t_end; ++t) {
    w.snapshots.push_back(local_khop(graphs.at(t), key.target, k));
  }
  if (with_label) {
    if (key.t_end + 1 >= graphs.steps()) throw std::out_of_range("make_window: no label step");
    const auto& next = graphs.at(key.t_end + 1).snapshot();
    const auto idx = graphs.at(key.t_end + 1).index_of(key.target);
    if (!idx || *idx >= static_cast<int>(next.grid.size())) {
      throw std::invalid_argument("make_window: target is not a grid node");
    }
    w.target_next = next.grid[static_cast<std::size_t>(*idx)].features;
  }
  return w;
}

std::vector<SubgraphWindow> build_windows(const DatasetGraphs& graphs, int m, int k,
                                          std::span<const NodeId> targets) {
  std::vector<SubgraphWindow> out;
  for (const WindowKey& key : window_keys(graphs.steps(), m, targets)) {
    out.push_back(make_window(graphs, key, m, k));
  }
  return out;
}

}  // namespace asgn
