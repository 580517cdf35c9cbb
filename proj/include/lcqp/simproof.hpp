#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lcqp/graph.hpp"
#include "lcqp/ipm.hpp"

namespace lcqp {

// Hand-wired (non-learned) message passing that runs the inner
// conjugate-gradient recurrences and one damped Newton pass directly on the
// problem graph.  Variable nodes carry the channels [r1 p1 w1 x s], constraint
// nodes [r2 p2 w2 lambda], and the global node holds the scalars produced by
// the sum/min reductions (sigma*mu, alpha, beta, r'r).  kv/kc are the scratch
// channels holding the latest saddle-matrix product.
//
// Every aggregation sums in ascending node order, variables before
// constraints, which is also how the reference recurrences accumulate; the
// two sides are meant to be compared channel by channel.
struct SimState {
  std::vector<double> r1, p1, w1, x, s, kv;
  std::vector<double> r2, p2, w2, lambda, kc;
  double sigma_mu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double rr = 0.0;
  int steps = 0;       // message-passing steps consumed so far
  int iterations = 0;  // completed inner iterations
  bool converged = false;  // residual reached exactly zero
};

// One message-passing step building the initial channels:
//   r1 = sigma_mu/x - Qx - c + A'lambda   on variable nodes,
//   r2 = Ax - b                           on constraint nodes,
// then p = r and w = 0.
SimState sim_cg_init(const ProblemGraph& graph, const std::vector<double>& x,
                     const std::vector<double>& lambda,
                     const std::vector<double>& s, double sigma_mu);

// Seven message-passing steps advancing (r, p, w) by one iteration:
// matrix product with r, alpha on the global node, w update, matrix product
// with p, r update, beta on the global node, p update.
void sim_cg_iteration(const ProblemGraph& graph, SimState& state);

// Full outer pass on the graph: init + n+m inner iterations, per-node slack
// direction recovery, min-aggregated smoothed boundary ratios, 0.99-damped
// update of (x, s, lambda), and the centering shrink of mu.
struct SimOuterResult {
  std::vector<double> x, lambda, s;
  double mu = 0.0;
  int cg_steps = 0;  // steps spent on init + inner iterations
};
SimOuterResult sim_ipm_outer(const ProblemGraph& graph, const IpmState& state,
                             double sigma, double eps);

// |a - b| / max(1, |a|, |b|); equal values (including infinities) and
// NaN pairs count as zero, mixed specials as infinity.
double channel_deviation(double a, double b);

// Runs the simulation and the reference algorithms side by side from the
// same interior point and records the worst per-channel deviation under
// labels like "init.r1", "cg.w2", "outer.x".
struct LockstepReport {
  std::map<std::string, double> max_dev;
  double worst = 0.0;
  int cg_iterations = 0;
  int cg_steps = 0;
  bool steps_ok = false;
};
LockstepReport lockstep_compare(const LcqpInstance& inst, const IpmState& state,
                                double sigma, double eps);

// Seeded trials over random instances and interior points; prints the
// aggregated per-channel deviations to `out` and pass/fail per the
// tolerance.  Used by the verify subcommand and the acceptance tests.
struct VerifySummary {
  int trials = 0;
  double worst = 0.0;
  bool steps_ok = true;
  bool pass = false;
};
VerifySummary verify_sim(int n, int m, int trials, std::uint64_t seed,
                         double tol, std::ostream& out);

}  // namespace lcqp
