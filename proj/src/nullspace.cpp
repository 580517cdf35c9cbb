#include "lcqp/nullspace.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "lcqp/ipm.hpp"

namespace lcqp {

std::vector<double> NullspaceBasis::project(const std::vector<double>& d) const {
  // B (B' d); the basis is orthonormal so this is the orthogonal projector.
  std::vector<double> coeff(static_cast<std::size_t>(dim), 0.0);
  for (int k = 0; k < dim; ++k) {
    const double* col = cols.data() + static_cast<std::size_t>(k) * n;
    double acc = 0.0;
    for (int row = 0; row < n; ++row) acc += col[row] * d[row];
    coeff[k] = acc;
  }
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < dim; ++k) {
    const double* col = cols.data() + static_cast<std::size_t>(k) * n;
    for (int row = 0; row < n; ++row) out[row] += coeff[k] * col[row];
  }
  return out;
}

NullspaceBasis compute_nullspace(const SparseMatrix& a) {
  const int n = a.cols;
  const int m = a.rows;
  NullspaceBasis basis;
  basis.n = n;

  if (m == 0) {
    basis.dim = n;
    basis.cols.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) basis.cols[static_cast<std::size_t>(j) * n + j] = 1.0;
    return basis;
  }

  Eigen::MatrixXd at = Eigen::MatrixXd::Zero(n, m);
  double frob2 = 0.0;
  for (const SparseEntry& e : a.entries) {
    at(e.col, e.row) = e.value;
    frob2 += e.value * e.value;
  }
  const double norm_a = std::sqrt(frob2);

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(at);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (int i = 0; i < m; ++i)
    if (std::abs(r(i, i)) < 1e-10 * norm_a)
      throw SolveError(SolveError::Code::rank_deficient,
                       "constraint matrix is rank deficient");

  Eigen::MatrixXd q_full = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  basis.dim = n - m;
  basis.cols.resize(static_cast<std::size_t>(n) * basis.dim);
  for (int k = 0; k < basis.dim; ++k) {
    Eigen::VectorXd col = q_full.col(m + k);
    // Fix the sign so equal inputs give byte-equal bases.
    for (int row = 0; row < n; ++row) {
      if (std::abs(col(row)) > 1e-12) {
        if (col(row) < 0.0) col = -col;
        break;
      }
    }
    for (int row = 0; row < n; ++row)
      basis.cols[static_cast<std::size_t>(k) * n + row] = col(row);
  }
  return basis;
}

namespace {

// Shaves the leftover primal residual: the least-squares solution of Ax = b
// is exact to rounding, and points on the segment toward it scale the
// residual by the retained fraction t.  Stop before any coordinate loses
// the margin it already had (or drops under one), so positivity survives.
std::vector<double> retract_toward_least_squares(const LcqpInstance& inst,
                                                 const std::vector<double>& x) {
  const int n = inst.n;
  const int m = inst.m;
  if (m == 0) return x;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
  for (const SparseEntry& e : inst.a.entries) a(e.row, e.col) = e.value;
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) b(i) = inst.b[i];
  const Eigen::VectorXd least = a.transpose() * (a * a.transpose()).ldlt().solve(b);

  double t = 0.0;
  for (int j = 0; j < n; ++j) {
    const double floor_j = std::min(1.0, x[j]);
    const double delta = x[j] - least(j);
    if (delta > 0.0) t = std::max(t, (floor_j - least(j)) / delta);
  }
  t = std::min(std::max(t, 0.0), 1.0);

  std::vector<double> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) out[j] = least(j) + t * (x[j] - least(j));
  return out;
}

}  // namespace

std::vector<double> feasible_initial_point(const LcqpInstance& inst) {
  // Same constraints, zero objective; any converged interior iterate will do,
  // so stop as soon as the primal residual is down.  Stopping with the
  // barrier parameter still large keeps the point comfortably off the
  // boundary.
  LcqpInstance probe;
  probe.n = inst.n;
  probe.m = inst.m;
  probe.a = inst.a;
  probe.b = inst.b;
  probe.c.assign(static_cast<std::size_t>(inst.n), 0.0);
  probe.q.rows = probe.q.cols = inst.n;
  probe.q.symmetric = true;

  IpmConfig cfg;
  cfg.tol_kkt = 1e-9;
  cfg.stop_at_primal = true;
  const IpmResult lp = ipm_solve(probe, cfg);
  if (!lp.converged)
    throw SolveError(SolveError::Code::not_converged,
                     "no interior feasible point found; constraints look infeasible");

  // The zero-objective run can drift far outward while its residual closes,
  // because the polyhedron is typically unbounded and the barrier keeps
  // pushing along its recession directions.  A nearest-to-ones pass over the
  // same constraints has a bounded central path, so its early-stopped iterate
  // is interior at the constraint data's own scale.  The tight primal stop
  // matters: the search's one-step oracle check resolves gaps near 1e-10, and
  // any residual left here surfaces there through the projection.
  for (int j = 0; j < inst.n; ++j) probe.q.add(j, j, 1.0);
  probe.c.assign(static_cast<std::size_t>(inst.n), -1.0);
  IpmConfig recenter;
  recenter.tol_kkt = 1e-12;
  recenter.stop_at_primal = true;
  // Decay the barrier slowly here: the residual may need many damped steps to
  // close, and a fast decay starves the boundary coordinates to denormals
  // before it does.
  recenter.sigma = 0.9;
  std::vector<double> seed = lp.x;
  try {
    const IpmResult qp = ipm_solve(probe, recenter);
    if (qp.converged) seed = qp.x;
  } catch (const SolveError&) {
    // keep the zero-objective point; it satisfies the contract, just at a
    // larger scale
  }
  return retract_toward_least_squares(inst, seed);
}

}  // namespace lcqp
