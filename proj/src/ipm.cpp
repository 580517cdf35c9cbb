#include "lcqp/ipm.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace lcqp {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// The trace is diffed entry-for-entry against the graph-executed form of the
// same recurrences, so its reductions and matrix-vector products accumulate
// strictly in index order; Eigen's vectorized kernels would reassociate.
double dot_seq(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i) * b(i);
  return acc;
}

Eigen::VectorXd matvec_seq(const Eigen::MatrixXd& k, const Eigen::VectorXd& v) {
  Eigen::VectorXd y(k.rows());
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k.cols(); ++j) acc += k(i, j) * v(j);
    y(i) = acc;
  }
  return y;
}

}  // namespace

IpmState ipm_initial_state(const LcqpInstance& inst) {
  IpmState st;
  st.x.assign(static_cast<std::size_t>(inst.n), 1.0);
  st.s.assign(static_cast<std::size_t>(inst.n), 1.0);
  st.lambda.assign(static_cast<std::size_t>(inst.m), 0.0);
  st.mu = 1.0;  // x's / n at the all-ones start
  return st;
}

Eigen::MatrixXd assemble_augmented(const LcqpInstance& inst,
                                   const std::vector<double>& x,
                                   const std::vector<double>& s) {
  const int n = inst.n;
  const int m = inst.m;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
  for (const SparseEntry& e : inst.q.entries) k(e.row, e.col) += e.value;
  for (int j = 0; j < n; ++j) k(j, j) += s[j] / x[j];
  for (const SparseEntry& e : inst.a.entries) {
    k(e.col, n + e.row) = -e.value;  // -A'
    k(n + e.row, e.col) = -e.value;  // -A
  }
  return k;
}

Eigen::VectorXd newton_rhs(const LcqpInstance& inst, const std::vector<double>& x,
                           const std::vector<double>& lambda, double sigma_mu) {
  const int n = inst.n;
  const int m = inst.m;
  Eigen::VectorXd rhs(n + m);
  const std::vector<double> qx = inst.q.multiply(x);
  const std::vector<double> atl = inst.a.multiply_transpose(lambda);
  for (int j = 0; j < n; ++j)
    rhs(j) = sigma_mu / x[j] - qx[j] - inst.c[j] + atl[j];
  const std::vector<double> ax = inst.a.multiply(x);
  for (int i = 0; i < m; ++i) rhs(n + i) = ax[i] - inst.b[i];
  return rhs;
}

Eigen::VectorXd direct_augmented_solve(const Eigen::MatrixXd& k,
                                       const Eigen::VectorXd& rhs) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
  const Eigen::VectorXd z = lu.solve(rhs);
  const double scale = rhs.cwiseAbs().maxCoeff() + 1.0;
  if (!z.allFinite() || (k * z - rhs).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw SolveError(SolveError::Code::singular_system,
                     "reduced system factorization failed the residual check");
  return z;
}

CgTrace cg_augmented_trace(const Eigen::MatrixXd& k, const Eigen::VectorXd& rhs,
                           int iters) {
  CgTrace trace;
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(rhs.size());
  trace.r.push_back(r);
  trace.p.push_back(p);
  trace.w.push_back(w);
  for (int t = 0; t < iters; ++t) {
    const double rr = dot_seq(r, r);
    if (rr == 0.0) trace.converged_early = true;
    const Eigen::VectorXd kr = matvec_seq(k, r);
    const double alpha = safe_div(rr, dot_seq(r, kr));
    const Eigen::VectorXd kp = matvec_seq(k, p);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) += alpha * p(i);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) -= alpha * kp(i);
    const double beta = safe_div(dot_seq(r, r), rr);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = beta * p(i) + r(i);
    trace.r.push_back(r);
    trace.p.push_back(p);
    trace.w.push_back(w);
    ++trace.iterations;
  }
  return trace;
}

Eigen::VectorXd cg_augmented(const Eigen::MatrixXd& k, const Eigen::VectorXd& rhs,
                             int max_iter, double tol, bool* breakdown) {
  if (breakdown) *breakdown = false;
  const double scale = rhs.norm() + 1.0;
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(rhs.size());
  for (int t = 0; t < max_iter; ++t) {
    const double rr = r.dot(r);
    if (std::sqrt(rr) <= tol * scale) break;
    const double rkr = r.dot(k * r);
    if (std::abs(rkr) <= 1e-14 * rr) {
      if (breakdown) *breakdown = true;
      break;
    }
    const double alpha = rr / rkr;
    const Eigen::VectorXd w_prev = w;
    w += alpha * p;
    r -= alpha * (k * p);
    if (!r.allFinite() || !w.allFinite()) {
      // Divergence to non-finite values counts as a breakdown; hand back the
      // last finite iterate so the caller can fall back.
      if (breakdown) *breakdown = true;
      return w_prev;
    }
    const double beta = r.dot(r) / rr;
    p = beta * p + r;
  }
  if (r.norm() > tol * scale && breakdown) *breakdown = true;
  return w;
}

Eigen::VectorXd cg_standard(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                            int max_iter, double tol) {
  if (max_iter <= 0) max_iter = static_cast<int>(rhs.size());
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(rhs.size());
  for (int t = 0; t < max_iter; ++t) {
    const double rr = r.dot(r);
    if (std::sqrt(rr) <= tol) break;
    const double rmr = r.dot(m * r);
    if (rmr <= 1e-14 * rr)
      throw SolveError(SolveError::Code::cg_breakdown,
                       "conjugate-gradient breakdown: system is indefinite or singular");
    const double alpha = rr / rmr;
    w += alpha * p;
    r -= alpha * (m * p);
    const double beta = r.dot(r) / rr;
    p = beta * p + r;
  }
  return w;
}

namespace {

// min(1, boundary step ratios) for the chosen search flavour.
double step_limit(const std::vector<double>& v, const std::vector<double>& dv,
                  LineSearch mode, double eps) {
  double limit = std::numeric_limits<double>::infinity();
  if (mode == LineSearch::exact) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) limit = std::min(limit, v[i] / -dv[i]);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double node = dv[i] <= -eps ? v[i] / -dv[i] : v[i] / eps;
      limit = std::min(limit, node);
    }
  }
  return limit;
}

}  // namespace

std::vector<double> recover_delta_s(const std::vector<double>& x,
                                    const std::vector<double>& s,
                                    const std::vector<double>& dx,
                                    double sigma_mu) {
  // ds = -X^{-1}S dx - s + X^{-1} sigma mu 1
  std::vector<double> ds(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    ds[j] = -(s[j] / x[j]) * dx[j] - s[j] + sigma_mu / x[j];
  return ds;
}

double step_length_primal_dual(const std::vector<double>& x,
                               const std::vector<double>& dx,
                               const std::vector<double>& s,
                               const std::vector<double>& ds) {
  double alpha = 1.0;
  alpha = std::min(alpha, step_limit(x, dx, LineSearch::exact, 0.0));
  alpha = std::min(alpha, step_limit(s, ds, LineSearch::exact, 0.0));
  return alpha;
}

void ipm_iterate(const LcqpInstance& inst, IpmState& state, const IpmConfig& cfg,
                 int* cg_breakdowns, int* cg_fallbacks) {
  const int n = inst.n;
  const int m = inst.m;
  const double sigma_mu = cfg.sigma * state.mu;

  const Eigen::MatrixXd k = assemble_augmented(inst, state.x, state.s);
  const Eigen::VectorXd rhs = newton_rhs(inst, state.x, state.lambda, sigma_mu);

  Eigen::VectorXd z;
  if (cfg.inner == InnerSolver::direct) {
    z = direct_augmented_solve(k, rhs);
  } else {
    const int cap = cfg.cg_max > 0 ? cfg.cg_max : n + m;
    if (cfg.cg_pure) {
      z = cg_augmented_trace(k, rhs, cap).w.back();
    } else {
      bool breakdown = false;
      z = cg_augmented(k, rhs, cap, cfg.cg_tol, &breakdown);
      if (breakdown) {
        if (cg_breakdowns) ++*cg_breakdowns;
        if (!cfg.cg_fallback)
          throw SolveError(SolveError::Code::cg_breakdown,
                           "inner conjugate-gradient solve broke down and fallback is off");
        if (cg_fallbacks) ++*cg_fallbacks;
        z = direct_augmented_solve(k, rhs);
      }
    }
  }

  std::vector<double> dx(static_cast<std::size_t>(n));
  std::vector<double> dlambda(static_cast<std::size_t>(m));
  for (int j = 0; j < n; ++j) dx[j] = z(j);
  for (int i = 0; i < m; ++i) dlambda[i] = z(n + i);

  const std::vector<double> ds = recover_delta_s(state.x, state.s, dx, sigma_mu);

  double alpha = 1.0;
  alpha = std::min(alpha, step_limit(state.x, dx, cfg.line_search, cfg.line_eps));
  alpha = std::min(alpha, step_limit(state.s, ds, cfg.line_search, cfg.line_eps));

  const double damped = 0.99 * alpha;
  for (int j = 0; j < n; ++j) state.x[j] += damped * dx[j];
  for (int j = 0; j < n; ++j) state.s[j] += damped * ds[j];
  for (int i = 0; i < m; ++i) state.lambda[i] += damped * dlambda[i];
  state.mu *= cfg.sigma;
}

IpmResult ipm_solve(const LcqpInstance& inst, const IpmConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  IpmState state = ipm_initial_state(inst);

  IpmResult out;
  for (int outer = 0; outer <= cfg.max_outer; ++outer) {
    out.kkt = kkt_residuals(inst, state.x, state.lambda, state.s);
    const bool done = cfg.stop_at_primal
                          ? out.kkt.primal <= cfg.tol_kkt
                          : (out.kkt.primal <= cfg.tol_kkt &&
                             out.kkt.dual <= cfg.tol_kkt && out.kkt.comp <= cfg.tol_kkt);
    if (done) {
      out.converged = true;
      break;
    }
    if (outer == cfg.max_outer) break;
    ipm_iterate(inst, state, cfg, &out.cg_breakdowns, &out.cg_fallbacks);
    ++out.iterations;
    if (cfg.record_trajectory) out.trajectory.push_back(state.x);
  }

  out.x = state.x;
  out.lambda = state.lambda;
  out.s = state.s;
  out.mu = state.mu;
  out.objective = objective_value(inst, state.x);
  out.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace lcqp
