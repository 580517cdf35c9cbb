#pragma once

#include <vector>

#include "lcqp/types.hpp"

namespace lcqp {

// Orthonormal basis of { d : A d = 0 }, stored column-major (n x dim).
// Columns are sign-fixed (first entry of magnitude > 1e-12 made positive) so
// equal inputs give byte-equal bases.
struct NullspaceBasis {
  int n = 0;
  int dim = 0;                // n - m for full-row-rank A
  std::vector<double> cols;   // column-major

  double entry(int row, int col) const {
    return cols[static_cast<std::size_t>(col) * n + row];
  }

  // Orthogonal projection onto the null space: B (B' d).
  std::vector<double> project(const std::vector<double>& d) const;
};

// Householder QR of A'; the trailing n - m columns of Q span the null space.
// Throws SolveError (rank_deficient) when any |R_ii| < 1e-10 ||A||_F.
// m = 0 returns the identity basis.
NullspaceBasis compute_nullspace(const SparseMatrix& a);

// Strictly positive x0 with ||A x0 - b||_inf <= 1e-8, found by running the
// interior-point solver on the same constraints with a zero objective and
// stopping once the primal residual is down.  A second nearest-to-ones pass
// keeps the point at the constraint data's own scale, and a final retraction
// toward the least-squares solution of Ax = b shaves the remaining residual.
// Throws SolveError (not_converged) when the constraints look infeasible.
std::vector<double> feasible_initial_point(const LcqpInstance& inst);

}  // namespace lcqp
