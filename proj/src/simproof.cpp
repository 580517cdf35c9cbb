#include "lcqp/simproof.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "lcqp/datasets.hpp"
#include "lcqp/errors.hpp"
#include "lcqp/rng.hpp"

namespace lcqp {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// Saddle-matrix product evaluated edge by edge.  Per receiving node the adds
// run in ascending source order with the diagonal term folded in at its
// column position, which is exactly the order the reference trace uses on
// the dense matrix [[Q + X^{-1}S, -A'], [-A, 0]]; the two sides therefore
// agree bitwise, not merely to rounding.
void sim_saddle_product(const ProblemGraph& g, const std::vector<double>& x,
                        const std::vector<double>& s,
                        const std::vector<double>& v1,
                        const std::vector<double>& v2,
                        std::vector<double>& out1, std::vector<double>& out2) {
  for (int j = 0; j < g.n; ++j) {
    const double diag = s[j] / x[j];
    double acc = 0.0;
    bool diag_done = false;
    for (const auto& [u, w] : g.var_vars[j]) {
      if (!diag_done && u >= j) {
        if (u == j) {
          acc += (w + diag) * v1[j];
          diag_done = true;
          continue;
        }
        acc += diag * v1[j];
        diag_done = true;
      }
      acc += w * v1[u];
    }
    if (!diag_done) acc += diag * v1[j];
    for (const auto& [c, w] : g.var_cons[j]) acc += -w * v2[c];
    out1[j] = acc;
  }
  for (int i = 0; i < g.m; ++i) {
    double acc = 0.0;
    for (const auto& [v, w] : g.cons_vars[i]) acc += -w * v1[v];
    out2[i] = acc;
  }
}

// Scalar reduction on the global node: one accumulator over variable nodes
// then constraint nodes, like the reference dot over the stacked vector.
double sim_reduce(const std::vector<double>& a1, const std::vector<double>& b1,
                  const std::vector<double>& a2, const std::vector<double>& b2) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a1.size(); ++j) acc += a1[j] * b1[j];
  for (std::size_t i = 0; i < a2.size(); ++i) acc += a2[i] * b2[i];
  return acc;
}

}  // namespace

SimState sim_cg_init(const ProblemGraph& g, const std::vector<double>& x,
                     const std::vector<double>& lambda,
                     const std::vector<double>& s, double sigma_mu) {
  const std::size_t n = static_cast<std::size_t>(g.n);
  const std::size_t m = static_cast<std::size_t>(g.m);
  if (x.size() != n || s.size() != n || lambda.size() != m)
    throw ValidationError("point dimensions disagree with the graph");

  SimState st;
  st.x = x;
  st.s = s;
  st.lambda = lambda;
  st.sigma_mu = sigma_mu;
  st.r1.resize(n);
  st.p1.resize(n);
  st.w1.assign(n, 0.0);
  st.kv.assign(n, 0.0);
  st.r2.resize(m);
  st.p2.resize(m);
  st.w2.assign(m, 0.0);
  st.kc.assign(m, 0.0);

  // Variable nodes fold the Q and A convolutions with their own features;
  // constraint nodes fold the A convolution with b.  p copies r, w stays 0.
  for (int j = 0; j < g.n; ++j) {
    double qx = 0.0;
    for (const auto& [u, w] : g.var_vars[j]) qx += w * x[u];
    double atl = 0.0;
    for (const auto& [c, w] : g.var_cons[j]) atl += w * lambda[c];
    st.r1[j] = sigma_mu / x[j] - qx - g.c_feat[j] + atl;
    st.p1[j] = st.r1[j];
  }
  for (int i = 0; i < g.m; ++i) {
    double ax = 0.0;
    for (const auto& [v, w] : g.cons_vars[i]) ax += w * x[v];
    st.r2[i] = ax - g.b_feat[i];
    st.p2[i] = st.r2[i];
  }
  st.steps = 1;
  return st;
}

void sim_cg_iteration(const ProblemGraph& g, SimState& st) {
  const int n = g.n;
  const int m = g.m;

  // Step 1: matrix product with r lands in the scratch channels.
  sim_saddle_product(g, st.x, st.s, st.r1, st.r2, st.kv, st.kc);
  ++st.steps;

  // Step 2: global node aggregates r'r and r'(Pr) and forms the step scalar.
  st.rr = sim_reduce(st.r1, st.r1, st.r2, st.r2);
  if (st.rr == 0.0) st.converged = true;
  const double rkr = sim_reduce(st.r1, st.kv, st.r2, st.kc);
  st.alpha = safe_div(st.rr, rkr);
  ++st.steps;

  // Step 3: w absorbs alpha * p on every node.
  for (int j = 0; j < n; ++j) st.w1[j] += st.alpha * st.p1[j];
  for (int i = 0; i < m; ++i) st.w2[i] += st.alpha * st.p2[i];
  ++st.steps;

  // Step 4: matrix product with p.
  sim_saddle_product(g, st.x, st.s, st.p1, st.p2, st.kv, st.kc);
  ++st.steps;

  // Step 5: r steps against alpha * (Pp).
  for (int j = 0; j < n; ++j) st.r1[j] -= st.alpha * st.kv[j];
  for (int i = 0; i < m; ++i) st.r2[i] -= st.alpha * st.kc[i];
  ++st.steps;

  // Step 6: global node aggregates the fresh r'r and forms beta.
  const double rr_new = sim_reduce(st.r1, st.r1, st.r2, st.r2);
  st.beta = safe_div(rr_new, st.rr);
  ++st.steps;

  // Step 7: p refreshes from beta * p + r.
  for (int j = 0; j < n; ++j) st.p1[j] = st.beta * st.p1[j] + st.r1[j];
  for (int i = 0; i < m; ++i) st.p2[i] = st.beta * st.p2[i] + st.r2[i];
  ++st.steps;

  ++st.iterations;
}

SimOuterResult sim_ipm_outer(const ProblemGraph& g, const IpmState& state,
                             double sigma, double eps) {
  const int n = g.n;
  const int m = g.m;
  const double sigma_mu = sigma * state.mu;
  SimState st = sim_cg_init(g, state.x, state.lambda, state.s, sigma_mu);
  for (int t = 0; t < n + m; ++t) sim_cg_iteration(g, st);

  SimOuterResult out;
  out.cg_steps = st.steps;

  // Slack direction recovered on each variable node from its own channels.
  std::vector<double> ds(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    ds[j] = -(state.s[j] / state.x[j]) * st.w1[j] - state.s[j] +
            sigma_mu / state.x[j];

  // Smoothed boundary ratios, min-aggregated on the global node with 1.
  double alpha = 1.0;
  for (int j = 0; j < n; ++j) {
    const double node =
        st.w1[j] <= -eps ? state.x[j] / -st.w1[j] : state.x[j] / eps;
    alpha = std::min(alpha, node);
  }
  for (int j = 0; j < n; ++j) {
    const double node = ds[j] <= -eps ? state.s[j] / -ds[j] : state.s[j] / eps;
    alpha = std::min(alpha, node);
  }

  const double damped = 0.99 * alpha;
  out.x.resize(static_cast<std::size_t>(n));
  out.s.resize(static_cast<std::size_t>(n));
  out.lambda.resize(static_cast<std::size_t>(m));
  for (int j = 0; j < n; ++j) out.x[j] = state.x[j] + damped * st.w1[j];
  for (int j = 0; j < n; ++j) out.s[j] = state.s[j] + damped * ds[j];
  for (int i = 0; i < m; ++i) out.lambda[i] = state.lambda[i] + damped * st.w2[i];
  out.mu = state.mu * sigma;
  return out;
}

double channel_deviation(double a, double b) {
  if (a == b) return 0.0;
  if (std::isnan(a) && std::isnan(b)) return 0.0;
  if (!std::isfinite(a) || !std::isfinite(b))
    return std::numeric_limits<double>::infinity();
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

namespace {

void track(LockstepReport& rep, const char* key, double a, double b) {
  const double dev = channel_deviation(a, b);
  double& slot = rep.max_dev[key];
  if (dev > slot) slot = dev;
  if (dev > rep.worst) rep.worst = dev;
}

void track_span(LockstepReport& rep, const char* key,
                const std::vector<double>& sim, const Eigen::VectorXd& ref,
                int offset) {
  for (std::size_t i = 0; i < sim.size(); ++i)
    track(rep, key, sim[i], ref(offset + static_cast<Eigen::Index>(i)));
}

void track_vec(LockstepReport& rep, const char* key,
               const std::vector<double>& sim, const std::vector<double>& ref) {
  for (std::size_t i = 0; i < sim.size(); ++i) track(rep, key, sim[i], ref[i]);
}

}  // namespace

LockstepReport lockstep_compare(const LcqpInstance& inst, const IpmState& state,
                                double sigma, double eps) {
  LockstepReport rep;
  const int n = inst.n;
  const int m = inst.m;
  const ProblemGraph graph = encode_graph(inst, true);
  const double sigma_mu = sigma * state.mu;

  const Eigen::MatrixXd k = assemble_augmented(inst, state.x, state.s);
  const Eigen::VectorXd rhs = newton_rhs(inst, state.x, state.lambda, sigma_mu);
  const CgTrace trace = cg_augmented_trace(k, rhs, n + m);

  SimState sim = sim_cg_init(graph, state.x, state.lambda, state.s, sigma_mu);
  track_span(rep, "init.r1", sim.r1, trace.r[0], 0);
  track_span(rep, "init.r2", sim.r2, trace.r[0], n);
  track_span(rep, "init.p1", sim.p1, trace.p[0], 0);
  track_span(rep, "init.p2", sim.p2, trace.p[0], n);
  track_span(rep, "init.w1", sim.w1, trace.w[0], 0);
  track_span(rep, "init.w2", sim.w2, trace.w[0], n);

  for (int t = 1; t <= n + m; ++t) {
    sim_cg_iteration(graph, sim);
    track_span(rep, "cg.r1", sim.r1, trace.r[static_cast<std::size_t>(t)], 0);
    track_span(rep, "cg.r2", sim.r2, trace.r[static_cast<std::size_t>(t)], n);
    track_span(rep, "cg.p1", sim.p1, trace.p[static_cast<std::size_t>(t)], 0);
    track_span(rep, "cg.p2", sim.p2, trace.p[static_cast<std::size_t>(t)], n);
    track_span(rep, "cg.w1", sim.w1, trace.w[static_cast<std::size_t>(t)], 0);
    track_span(rep, "cg.w2", sim.w2, trace.w[static_cast<std::size_t>(t)], n);
  }
  rep.cg_iterations = n + m;
  rep.cg_steps = sim.steps;
  rep.steps_ok = sim.steps == 1 + 7 * (n + m);

  // One reference outer pass with the matching inner route and line search.
  IpmState ref = state;
  IpmConfig cfg;
  cfg.sigma = sigma;
  cfg.inner = InnerSolver::cg;
  cfg.cg_pure = true;
  cfg.line_search = LineSearch::eps_continuous;
  cfg.line_eps = eps;
  ipm_iterate(inst, ref, cfg);

  const SimOuterResult outer = sim_ipm_outer(graph, state, sigma, eps);
  track_vec(rep, "outer.x", outer.x, ref.x);
  track_vec(rep, "outer.s", outer.s, ref.s);
  track_vec(rep, "outer.lambda", outer.lambda, ref.lambda);
  track(rep, "outer.mu", outer.mu, ref.mu);
  return rep;
}

VerifySummary verify_sim(int n, int m, int trials, std::uint64_t seed,
                         double tol, std::ostream& out) {
  if (n < 1 || m < 0 || trials < 1)
    throw ValidationError("verification needs n >= 1, m >= 0, trials >= 1");

  VerifySummary summary;
  summary.trials = trials;
  std::map<std::string, double> agg;
  int agg_steps = -1;

  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    LcqpInstance inst;
    inst.n = n;
    inst.m = m;
    inst.q = make_sparse_spd(n, 0.4, rng.next_u64());
    inst.q.sort_entries();
    inst.a.rows = m;
    inst.a.cols = n;
    for (int i = 0; i < m; ++i) {
      std::vector<std::pair<int, double>> row;
      while (row.empty())
        for (int j = 0; j < n; ++j)
          if (rng.uniform() < 0.7) row.emplace_back(j, rng.normal());
      for (const auto& [j, v] : row) inst.a.add(i, j, v);
    }
    inst.a.sort_entries();
    inst.b.resize(static_cast<std::size_t>(m));
    inst.c.resize(static_cast<std::size_t>(n));
    for (double& v : inst.b) v = rng.normal();
    for (double& v : inst.c) v = rng.normal();

    IpmState point;
    point.x.resize(static_cast<std::size_t>(n));
    point.s.resize(static_cast<std::size_t>(n));
    point.lambda.resize(static_cast<std::size_t>(m));
    for (double& v : point.x) v = rng.uniform(0.5, 1.5);
    for (double& v : point.s) v = rng.uniform(0.5, 1.5);
    for (double& v : point.lambda) v = rng.normal();
    double xs = 0.0;
    for (int j = 0; j < n; ++j) xs += point.x[j] * point.s[j];
    point.mu = xs / n;

    const LockstepReport rep = lockstep_compare(inst, point, 0.5, 1e-8);
    for (const auto& [key, dev] : rep.max_dev) {
      double& slot = agg[key];
      if (dev > slot) slot = dev;
    }
    if (rep.worst > summary.worst) summary.worst = rep.worst;
    if (!rep.steps_ok) summary.steps_ok = false;
    agg_steps = rep.cg_steps;
  }

  out << std::scientific << std::setprecision(3);
  for (const auto& [key, dev] : agg)
    out << "  " << key << "  max deviation " << dev << "\n";
  out << "  steps per inner pass: " << agg_steps << " (expected "
      << 1 + 7 * (n + m) << (summary.steps_ok ? ", ok)" : ", MISMATCH)")
      << "\n";
  summary.pass = summary.worst <= tol && summary.steps_ok;
  out << (summary.pass ? "PASS" : "FAIL") << ": worst deviation "
      << summary.worst << " over " << trials << " trials (tolerance " << tol
      << ")\n";
  return summary;
}

}  // namespace lcqp
