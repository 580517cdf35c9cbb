#include "lcqp/oracle.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace lcqp {

namespace {

Eigen::MatrixXd dense_of(const SparseMatrix& mat) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(mat.rows, mat.cols);
  for (const SparseEntry& e : mat.entries) out(e.row, e.col) = e.value;
  return out;
}

}  // namespace

BruteForceResult brute_force_optimum(const LcqpInstance& inst) {
  if (inst.n > 12)
    throw ValidationError("brute_force_optimum: n > 12 is outside the enumeration bound");
  const int n = inst.n;
  const int m = inst.m;
  const Eigen::MatrixXd q = dense_of(inst.q);
  const Eigen::MatrixXd a = dense_of(inst.a);
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(inst.b.data(), m);
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(inst.c.data(), n);

  BruteForceResult best;
  best.objective = std::numeric_limits<double>::infinity();

  std::vector<int> free_idx;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    free_idx.clear();
    for (int j = 0; j < n; ++j)
      if (mask & (1u << j)) free_idx.push_back(j);
    const int f = static_cast<int>(free_idx.size());

    // Stationarity of the equality-constrained restriction:
    //   [ Q_FF  A_F' ] [x_F]   [-c_F]
    //   [ A_F   0    ] [ y ] = [ b  ]
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(f + m, f + m);
    Eigen::VectorXd rhs(f + m);
    for (int p = 0; p < f; ++p) {
      for (int r = 0; r < f; ++r) kkt(p, r) = q(free_idx[p], free_idx[r]);
      for (int i = 0; i < m; ++i) {
        kkt(p, f + i) = a(i, free_idx[p]);
        kkt(f + i, p) = a(i, free_idx[p]);
      }
      rhs(p) = -c(free_idx[p]);
    }
    rhs.tail(m) = b;

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    const Eigen::VectorXd sol = lu.solve(rhs);
    // Singular or near-singular subsets show up as large solve residuals.
    const double scale = kkt.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff() + 1.0;
    if (!sol.allFinite() ||
        (kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-8 * scale * (1.0 + sol.cwiseAbs().maxCoeff()))
      continue;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int p = 0; p < f; ++p) x(free_idx[p]) = sol(p);
    if (x.minCoeff() < -1e-9) continue;
    if (m > 0 && (a * x - b).cwiseAbs().maxCoeff() > 1e-6) continue;

    const double obj = 0.5 * x.dot(q * x) + c.dot(x);
    if (obj < best.objective) {
      // Stationarity above reads Qx + c + A'y = 0 on the free block, so the
      // multiplier in the Qx + c - A'lambda - s = 0 convention is -y.
      const Eigen::VectorXd lambda = -sol.tail(m);
      const Eigen::VectorXd s = q * x + c - a.transpose() * lambda;
      best.feasible = true;
      best.objective = obj;
      best.x.assign(x.data(), x.data() + n);
      best.lambda.assign(lambda.data(), lambda.data() + m);
      best.s.assign(s.data(), s.data() + n);
    }
  }

  if (!best.feasible) best.objective = 0.0;
  return best;
}

}  // namespace lcqp
