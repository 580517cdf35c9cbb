#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcqp/errors.hpp"

namespace lcqp {

// Problems are kept in the standard form
//
//   minimize   (1/2) x'Qx + c'x
//   subject to A x = b,  x >= 0
//
// with Q symmetric positive semidefinite (n x n) and A of full row rank
// (m x n, m <= n).  A linear program is the special case Q = 0.

struct SparseEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Triplet-format sparse matrix.  Entries are kept sorted row-major and
// duplicates are disallowed.  When `symmetric` is set, entry (i, j) is
// present exactly when (j, i) is, with equal values; both triangles are
// stored explicitly so iteration never needs to mirror on the fly.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  bool symmetric = false;
  std::vector<SparseEntry> entries;

  void add(int i, int j, double v) { entries.push_back({i, j, v}); }
  void sort_entries();

  // y = M x
  std::vector<double> multiply(const std::vector<double>& x) const;
  // y = M' x
  std::vector<double> multiply_transpose(const std::vector<double>& x) const;
  // x' M x, traversing stored entries once (both triangles stored).
  double quad_form(const std::vector<double>& x) const;
  double max_abs() const;
};

struct LcqpInstance {
  int n = 0;
  int m = 0;
  SparseMatrix q;  // n x n, symmetric
  SparseMatrix a;  // m x n
  std::vector<double> b;
  std::vector<double> c;

  // Optional attachments (empty when absent): a reference optimum, and the
  // sequence of interior-point iterates x(1), x(2), ... that produced it.
  std::vector<double> x_star;
  std::vector<std::vector<double>> trajectory;
};

struct KktResiduals {
  double primal = 0.0;  // ||Ax - b||_inf
  double dual = 0.0;    // ||Qx + c - A'lambda - s||_inf
  double comp = 0.0;    // max_i |x_i s_i|
};

struct SolveReport {
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
  KktResiduals kkt;
  double wall_time_sec = 0.0;
};

// (1/2) x'Qx + c'x
double objective_value(const LcqpInstance& inst, const std::vector<double>& x);

KktResiduals kkt_residuals(const LcqpInstance& inst, const std::vector<double>& x,
                           const std::vector<double>& lambda,
                           const std::vector<double>& s);

// Structural checks: dimensions, index ranges, duplicate triplets, symmetry
// of Q, finiteness.  Positive semidefiniteness is checked probabilistically
// (x'Qx >= -tol on seeded random probes); a certain eigendecomposition is
// deliberately out of scope here.  Throws ValidationError.
void validate(const LcqpInstance& inst);

enum class RowSense { le, ge, eq };

// Rewrites  {A x <= / >= / = b}  over x >= 0 into equality standard form by
// appending one slack column per inequality row.  Variable order: originals
// first, slacks in row order.  Q and c are zero-padded on the slack block.
LcqpInstance to_equality_form(const SparseMatrix& q, const SparseMatrix& a,
                              const std::vector<double>& b,
                              const std::vector<double>& c,
                              const std::vector<RowSense>& senses);

}  // namespace lcqp
