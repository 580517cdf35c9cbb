#include "lcqp/graph.hpp"

#include <algorithm>

namespace lcqp {

ProblemGraph encode_graph(const LcqpInstance& inst, bool with_global) {
  ProblemGraph g;
  g.n = inst.n;
  g.m = inst.m;
  g.has_global = with_global;
  g.b_feat = inst.b;
  g.c_feat = inst.c;

  g.a_edges.reserve(inst.a.entries.size());
  for (const SparseEntry& e : inst.a.entries) g.a_edges.push_back({e.row, e.col, e.value});
  std::sort(g.a_edges.begin(), g.a_edges.end(),
            [](const ProblemGraph::AEdge& l, const ProblemGraph::AEdge& r) {
              if (l.c != r.c) return l.c < r.c;
              return l.v < r.v;
            });

  for (const SparseEntry& e : inst.q.entries)
    if (e.row <= e.col) g.q_edges.push_back({e.row, e.col, e.value});
  std::sort(g.q_edges.begin(), g.q_edges.end(),
            [](const ProblemGraph::QEdge& l, const ProblemGraph::QEdge& r) {
              if (l.v != r.v) return l.v < r.v;
              return l.u < r.u;
            });

  g.cons_vars.resize(static_cast<std::size_t>(g.m));
  g.var_cons.resize(static_cast<std::size_t>(g.n));
  for (const ProblemGraph::AEdge& e : g.a_edges) {
    g.cons_vars[e.c].emplace_back(e.v, e.w);
    g.var_cons[e.v].emplace_back(e.c, e.w);
  }
  g.var_vars.resize(static_cast<std::size_t>(g.n));
  for (const ProblemGraph::QEdge& e : g.q_edges) {
    g.var_vars[e.v].emplace_back(e.u, e.w);
    if (e.u != e.v) g.var_vars[e.u].emplace_back(e.v, e.w);
  }
  for (auto& lst : g.cons_vars) std::sort(lst.begin(), lst.end());
  for (auto& lst : g.var_cons) std::sort(lst.begin(), lst.end());
  for (auto& lst : g.var_vars) std::sort(lst.begin(), lst.end());
  return g;
}

LcqpInstance graph_to_instance(const ProblemGraph& graph) {
  LcqpInstance inst;
  inst.n = graph.n;
  inst.m = graph.m;
  inst.b = graph.b_feat;
  inst.c = graph.c_feat;

  inst.a.rows = graph.m;
  inst.a.cols = graph.n;
  for (const ProblemGraph::AEdge& e : graph.a_edges) inst.a.add(e.c, e.v, e.w);
  inst.a.sort_entries();

  inst.q.rows = inst.q.cols = graph.n;
  inst.q.symmetric = true;
  for (const ProblemGraph::QEdge& e : graph.q_edges) {
    inst.q.add(e.v, e.u, e.w);
    if (e.u != e.v) inst.q.add(e.u, e.v, e.w);
  }
  inst.q.sort_entries();
  return inst;
}

}  // namespace lcqp
