#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dcs/rng.hpp"

namespace dcs {

// One directed-graph instant. Edges never contain self-loops; every node is
// nevertheless a member of its own in- and out-neighborhood (a node always
// keeps access to its own state).
struct DigraphSnapshot {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // (from, to), deduplicated, sorted
  std::vector<std::vector<int>> in_neighbors;   // includes the node itself
  std::vector<std::vector<int>> out_neighbors;  // includes the node itself

  static DigraphSnapshot from_edges(int node_count,
                                    std::vector<std::pair<int, int>> edges);
  int edge_count() const { return static_cast<int>(edges.size()); }
};

bool strongly_connected(const DigraphSnapshot& g);

// Erdos-Renyi directed draw: each ordered pair kept with probability p,
// redrawn until strongly connected, then `drop_count` edges removed such that
// strong connectivity survives. Throws std::runtime_error once the retry
// budget is exhausted (p too small for n, or drop_count too aggressive).
DigraphSnapshot generate_er_directed(int node_count, double p, int drop_count,
                                     Rng& rng, int retry_budget = 1000);

// Sequence of snapshots whose aligned windows of length `window` each have a
// strongly connected union graph.
struct TimeVaryingTopology {
  int node_count = 0;
  int window = 1;
  std::vector<DigraphSnapshot> snapshots;

  long horizon() const { return static_cast<long>(snapshots.size()); }
  std::string to_json() const;
  static TimeVaryingTopology from_json(const std::string& text);
};

TimeVaryingTopology build_joint_topology(int node_count, double p,
                                         int drop_count, int window,
                                         long horizon, Rng& rng,
                                         int retry_budget = 1000);

bool validate_b_joint(const TimeVaryingTopology& topology);

// Union of the snapshots in aligned window k.
DigraphSnapshot window_union(const TimeVaryingTopology& topology, long k);

// Uniform neighborhood weights: w_in is row-stochastic over in-neighborhoods,
// w_out column-stochastic over out-neighborhoods.
struct BaseWeights {
  Eigen::MatrixXd w_in;
  Eigen::MatrixXd w_out;
};

BaseWeights base_weights(const DigraphSnapshot& g);

}  // namespace dcs
