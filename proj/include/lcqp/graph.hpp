#pragma once

#include <utility>
#include <vector>

#include "lcqp/types.hpp"

namespace lcqp {

// Bipartite (constraints, variables) or tripartite (plus one global node)
// view of an instance.  Constraint node i carries feature b_i, variable node
// j carries feature c_j; A nonzeros become constraint-variable edges and Q
// nonzeros (diagonal included) become variable-variable edges, each
// unordered pair stored once with v <= u.  The global node, when present,
// touches every other node with unit weight.  All edge lists and adjacency
// are sorted so traversal order is reproducible.
struct ProblemGraph {
  struct AEdge {
    int c = 0, v = 0;
    double w = 0.0;
  };
  struct QEdge {
    int v = 0, u = 0;  // v <= u
    double w = 0.0;
  };

  int n = 0;
  int m = 0;
  bool has_global = false;
  std::vector<AEdge> a_edges;  // sorted by (c, v)
  std::vector<QEdge> q_edges;  // sorted by (v, u)
  std::vector<double> b_feat;  // per constraint node
  std::vector<double> c_feat;  // per variable node

  // Sorted neighbour lists derived from the edge lists.
  std::vector<std::vector<std::pair<int, double>>> cons_vars;  // per c: (v, w)
  std::vector<std::vector<std::pair<int, double>>> var_cons;   // per v: (c, w)
  std::vector<std::vector<std::pair<int, double>>> var_vars;   // per v: (u, w)

  int global_edge_count() const { return has_global ? n + m : 0; }
};

ProblemGraph encode_graph(const LcqpInstance& inst, bool with_global);

// Inverse of encode_graph on the carried fields (reference solutions and
// trajectories are not part of the graph).  Used by round-trip checks.
LcqpInstance graph_to_instance(const ProblemGraph& graph);

}  // namespace lcqp
