#include "dcs/topology.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace dcs {

DigraphSnapshot DigraphSnapshot::from_edges(
    int node_count, std::vector<std::pair<int, int>> edges) {
  if (node_count < 1) throw std::invalid_argument("node_count must be >= 1");
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (auto [u, v] : edges) {
    if (u < 0 || u >= node_count || v < 0 || v >= node_count)
      throw std::invalid_argument("edge endpoint out of range");
    if (u == v)
      throw std::invalid_argument("explicit self-loop (self-loops are implicit)");
  }
  DigraphSnapshot g;
  g.node_count = node_count;
  g.edges = std::move(edges);
  g.in_neighbors.assign(node_count, {});
  g.out_neighbors.assign(node_count, {});
  for (int i = 0; i < node_count; ++i) {
    g.in_neighbors[i].push_back(i);
    g.out_neighbors[i].push_back(i);
  }
  for (auto [u, v] : g.edges) {
    g.out_neighbors[u].push_back(v);
    g.in_neighbors[v].push_back(u);
  }
  for (int i = 0; i < node_count; ++i) {
    std::sort(g.in_neighbors[i].begin(), g.in_neighbors[i].end());
    std::sort(g.out_neighbors[i].begin(), g.out_neighbors[i].end());
  }
  return g;
}

namespace {

// Reach count of a BFS from node 0 over the given adjacency.
int reachable_count(int n, const std::vector<std::vector<int>>& adj) {
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count;
}

bool strongly_connected_edges(int n,
                              const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> fwd(n), rev(n);
  for (auto [u, v] : edges) {
    fwd[u].push_back(v);
    rev[v].push_back(u);
  }
  return reachable_count(n, fwd) == n && reachable_count(n, rev) == n;
}

}  // namespace

bool strongly_connected(const DigraphSnapshot& g) {
  if (g.node_count <= 1) return g.node_count == 1;
  return strongly_connected_edges(g.node_count, g.edges);
}

DigraphSnapshot generate_er_directed(int node_count, double p, int drop_count,
                                     Rng& rng, int retry_budget) {
  if (node_count < 2) throw std::invalid_argument("need at least 2 nodes");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p must be in [0,1]");
  const long max_edges = static_cast<long>(node_count) * (node_count - 1);
  if (drop_count < 0 || drop_count >= max_edges)
    throw std::invalid_argument("drop_count out of range");

  std::vector<std::pair<int, int>> edges;
  bool connected = false;
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    edges.clear();
    for (int u = 0; u < node_count; ++u)
      for (int v = 0; v < node_count; ++v)
        if (u != v && rng.uniform() < p) edges.emplace_back(u, v);
    if (strongly_connected_edges(node_count, edges)) {
      connected = true;
      break;
    }
  }
  if (!connected)
    throw std::runtime_error(
        "generate_er_directed: no strongly connected draw within retry "
        "budget (p too small for n)");

  if (drop_count > 0) {
    if (static_cast<long>(edges.size()) <= drop_count)
      throw std::runtime_error("generate_er_directed: not enough edges to drop");
    bool dropped = false;
    std::vector<std::pair<int, int>> remaining;
    for (int attempt = 0; attempt < retry_budget; ++attempt) {
      // Uniform drop set of size drop_count; retried if it disconnects.
      std::vector<int> idx(edges.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      for (int i = 0; i < drop_count; ++i) {
        int j = i + static_cast<int>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      std::vector<char> gone(edges.size(), 0);
      for (int i = 0; i < drop_count; ++i) gone[idx[i]] = 1;
      remaining.clear();
      for (std::size_t i = 0; i < edges.size(); ++i)
        if (!gone[i]) remaining.push_back(edges[i]);
      if (strongly_connected_edges(node_count, remaining)) {
        dropped = true;
        break;
      }
    }
    if (!dropped)
      throw std::runtime_error(
          "generate_er_directed: no connectivity-preserving drop set found");
    edges = std::move(remaining);
  }
  return DigraphSnapshot::from_edges(node_count, std::move(edges));
}

TimeVaryingTopology build_joint_topology(int node_count, double p,
                                         int drop_count, int window,
                                         long horizon, Rng& rng,
                                         int retry_budget) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (horizon < 1 || horizon % window != 0)
    throw std::invalid_argument("horizon must be a positive multiple of window");

  TimeVaryingTopology topo;
  topo.node_count = node_count;
  topo.window = window;
  topo.snapshots.reserve(horizon);

  if (window == 1) {
    for (long t = 0; t < horizon; ++t)
      topo.snapshots.push_back(
          generate_er_directed(node_count, p, drop_count, rng, retry_budget));
    return topo;
  }

  // One strongly connected draw per window, its edges scattered uniformly
  // across the window's sub-snapshots; the aligned union is then strongly
  // connected by construction.
  const long windows = horizon / window;
  for (long k = 0; k < windows; ++k) {
    DigraphSnapshot whole =
        generate_er_directed(node_count, p, drop_count, rng, retry_budget);
    std::vector<std::vector<std::pair<int, int>>> parts(window);
    for (auto e : whole.edges)
      parts[static_cast<int>(rng.below(window))].push_back(e);
    for (int b = 0; b < window; ++b)
      topo.snapshots.push_back(
          DigraphSnapshot::from_edges(node_count, std::move(parts[b])));
  }
  return topo;
}

DigraphSnapshot window_union(const TimeVaryingTopology& topology, long k) {
  const long b = topology.window;
  if (k < 0 || (k + 1) * b > topology.horizon())
    throw std::invalid_argument("window index out of range");
  std::vector<std::pair<int, int>> edges;
  for (long t = k * b; t < (k + 1) * b; ++t) {
    const auto& e = topology.snapshots[t].edges;
    edges.insert(edges.end(), e.begin(), e.end());
  }
  return DigraphSnapshot::from_edges(topology.node_count, std::move(edges));
}

bool validate_b_joint(const TimeVaryingTopology& topology) {
  const long windows = topology.horizon() / topology.window;
  if (windows == 0) return false;
  for (long k = 0; k < windows; ++k)
    if (!strongly_connected(window_union(topology, k))) return false;
  return true;
}

BaseWeights base_weights(const DigraphSnapshot& g) {
  const int n = g.node_count;
  BaseWeights w;
  w.w_in = Eigen::MatrixXd::Zero(n, n);
  w.w_out = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double share = 1.0 / static_cast<double>(g.in_neighbors[i].size());
    for (int j : g.in_neighbors[i]) w.w_in(i, j) = share;
  }
  for (int j = 0; j < n; ++j) {
    const double share = 1.0 / static_cast<double>(g.out_neighbors[j].size());
    for (int i : g.out_neighbors[j]) w.w_out(i, j) = share;
  }
  return w;
}

std::string TimeVaryingTopology::to_json() const {
  nlohmann::json doc;
  doc["n"] = node_count;
  doc["B"] = window;
  auto& snaps = doc["snapshots"] = nlohmann::json::array();
  for (const auto& s : snapshots) {
    nlohmann::json edges = nlohmann::json::array();
    for (auto [u, v] : s.edges) edges.push_back({u, v});
    snaps.push_back(std::move(edges));
  }
  return doc.dump();
}

TimeVaryingTopology TimeVaryingTopology::from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  TimeVaryingTopology topo;
  topo.node_count = doc.at("n").get<int>();
  topo.window = doc.at("B").get<int>();
  for (const auto& snap : doc.at("snapshots")) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : snap)
      edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    topo.snapshots.push_back(
        DigraphSnapshot::from_edges(topo.node_count, std::move(edges)));
  }
  return topo;
}

}  // namespace dcs
