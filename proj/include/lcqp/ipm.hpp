#pragma once

#include <Eigen/Dense>

#include <vector>

#include "lcqp/types.hpp"

namespace lcqp {

enum class InnerSolver { direct, cg };
enum class LineSearch { exact, eps_continuous };

struct IpmConfig {
  double sigma = 0.5;        // centering factor; mu shrinks by sigma each pass
  double tol_kkt = 1e-8;     // convergence: all three residuals at or below
  int max_outer = 200;

  InnerSolver inner = InnerSolver::direct;
  double cg_tol = 1e-8;      // residual acceptance for the cg route
  int cg_max = 0;            // 0 means n + m iterations
  bool cg_fallback = true;   // fall back to the direct solve on breakdown
  bool cg_pure = false;      // run the recurrences to the cap with guarded
                             // divisions and accept the result as-is (used by
                             // the message-passing equivalence checks)

  LineSearch line_search = LineSearch::exact;
  double line_eps = 1e-8;    // boundary smoothing of the eps_continuous search

  bool record_trajectory = false;
  bool stop_at_primal = false;  // feasibility-only runs: stop once
                                // ||Ax - b||_inf <= tol_kkt
};

struct IpmState {
  std::vector<double> x, lambda, s;
  double mu = 0.0;
};

struct IpmResult {
  bool converged = false;
  std::vector<double> x, lambda, s;
  double objective = 0.0;
  int iterations = 0;
  KktResiduals kkt;
  double mu = 0.0;
  int cg_breakdowns = 0;
  int cg_fallbacks = 0;
  std::vector<std::vector<double>> trajectory;  // x after each update
  double wall_time_sec = 0.0;
};

// All-ones primal and dual slacks, zero multipliers, mu = x's / n = 1.
IpmState ipm_initial_state(const LcqpInstance& inst);

// One damped Newton pass on the perturbed optimality system:
// solve the reduced saddle-point system for (dx, dlambda), recover
// ds = -X^{-1}S dx - s + X^{-1} sigma mu 1, step alpha = min(1, boundary
// ratios) with a 0.99 damping on all three blocks, then mu *= sigma.
// Returns collected cg statistics through the pointers when given.
void ipm_iterate(const LcqpInstance& inst, IpmState& state, const IpmConfig& cfg,
                 int* cg_breakdowns = nullptr, int* cg_fallbacks = nullptr);

IpmResult ipm_solve(const LcqpInstance& inst, const IpmConfig& cfg = {});

// ds = -X^{-1}S dx - s + X^{-1} sigma mu 1 (the eliminated block row).
std::vector<double> recover_delta_s(const std::vector<double>& x,
                                    const std::vector<double>& s,
                                    const std::vector<double>& dx,
                                    double sigma_mu);

// Largest step in (0, 1] keeping x + a dx and s + a ds nonnegative.
double step_length_primal_dual(const std::vector<double>& x,
                               const std::vector<double>& dx,
                               const std::vector<double>& s,
                               const std::vector<double>& ds);

// Reduced system pieces, exposed for the verification harnesses.
//   K = [ Q + X^{-1}S   -A' ]        rhs = [ X^{-1} sigma mu 1 - Qx - c + A'lambda ]
//       [ -A             0  ]              [ Ax - b                                ]
Eigen::MatrixXd assemble_augmented(const LcqpInstance& inst,
                                   const std::vector<double>& x,
                                   const std::vector<double>& s);
Eigen::VectorXd newton_rhs(const LcqpInstance& inst, const std::vector<double>& x,
                           const std::vector<double>& lambda, double sigma_mu);

// Dense LU solve with a residual acceptance check of 1e-8 relative; throws
// SolveError (singular_system) when the factorization cannot reproduce rhs.
Eigen::VectorXd direct_augmented_solve(const Eigen::MatrixXd& k,
                                       const Eigen::VectorXd& rhs);

// Conjugate-gradient recurrences kept exactly as specified upstream: the
// step length divides r'r by r'Mr (not the usual p'Mp), starting from
// w = 0, p = r = rhs.  Division guards: a zero denominator freezes the
// iteration (alpha or beta taken as 0), so traces stay finite.
struct CgTrace {
  // State after t iterations sits at index t; index 0 is the start.
  std::vector<Eigen::VectorXd> r, p, w;
  int iterations = 0;
  bool converged_early = false;  // residual reached exact zero
};

// Pure recurrence trace for `iters` iterations, no breakdown policing.
CgTrace cg_augmented_trace(const Eigen::MatrixXd& k, const Eigen::VectorXd& rhs,
                           int iters);

// Production wrapper: flags a breakdown (|r'Kr| <= 1e-14 ||r||^2, divergence
// to non-finite values, or a final residual above tol * (||rhs|| + 1))
// through `breakdown` and never throws; callers decide whether to fall back.
Eigen::VectorXd cg_augmented(const Eigen::MatrixXd& k, const Eigen::VectorXd& rhs,
                             int max_iter, double tol, bool* breakdown);

// Same recurrences for a symmetric positive definite system; runs until
// max_iter (0 means dim(rhs)) or ||r|| <= tol; throws SolveError
// (cg_breakdown) when r'Mr dips to or below 1e-14 ||r||^2.
Eigen::VectorXd cg_standard(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                            int max_iter = 0, double tol = 1e-10);

}  // namespace lcqp
