#pragma once

#include <vector>

#include "lcqp/types.hpp"

namespace lcqp {

struct BruteForceResult {
  bool feasible = false;
  std::vector<double> x;
  std::vector<double> lambda;
  std::vector<double> s;
  double objective = 0.0;
};

// Exhaustive reference optimum for small instances (n <= 12).  Enumerates
// every subset of variables pinned to zero, solves the equality-constrained
// problem on the remaining coordinates through its stationarity system, and
// keeps the best candidate that satisfies x >= -1e-9 and ||Ax - b||_inf <=
// 1e-6.  Subsets whose stationarity system is singular are skipped.  For a
// convex objective the winning candidate is a global optimum; multipliers
// come from the same solve.  Returns feasible = false when no subset yields
// a feasible candidate.
BruteForceResult brute_force_optimum(const LcqpInstance& inst);

}  // namespace lcqp
