#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcqp/graph.hpp"
#include "lcqp/mpnn.hpp"
#include "lcqp/nullspace.hpp"
#include "lcqp/types.hpp"

namespace lcqp {

// Shared knobs of the iterative search loops.
struct SearchConfig {
  int t_train = 8;        // rollout length during training
  int t_infer = 32;       // rollout length during inference
  double tau0 = 1e-2;     // initial barrier-correction scale, halved per step
  double eps_bar = 1e-8;  // stabiliser in the correction denominator
  double delta = 1e-3;    // constraint threshold for candidate selection
};

void validate_search_config(const SearchConfig& cfg);

// |obj - obj_ref| / |obj_ref| in percent.  A zero reference falls back to the
// absolute difference (times 100); `absolute_out` reports when that happened.
double relative_gap_pct(double obj, double obj_ref, bool* absolute_out = nullptr);

// Mean over rows of |A_i x - b_i| / max{|b_i|, max_j |A_ij|}; a row whose
// scale is zero falls back to a unit denominator.  m = 0 gives 0.
double constraint_violation(const LcqpInstance& inst, const std::vector<double>& x);

// ||A x - b||_inf.
double max_constraint_residual(const LcqpInstance& inst, const std::vector<double>& x);

// Largest step in [0, 1] keeping x + alpha * d elementwise nonnegative:
// min{1, x_i / -d_i over d_i < 0}.
double step_length_positivity(const std::vector<double>& x, const std::vector<double>& d);

// Correction scale; halves after every feasibility_update.
struct CorrectionState {
  double tau = 0.0;
};

struct FeasibilityStep {
  std::vector<double> x_next;
  std::vector<double> d_tilde;
  double alpha = 0.0;
};

// One feasibility-preserving update: d = d_pred + tau / (x_prev + eps),
// d_tilde = project(d), alpha per step_length_positivity, then
// x_next = x_prev + alpha * d_tilde and tau halves.  Rounding dust below
// zero (within 1e-12, or a few ulps of the step magnitude when the step is
// large) is clamped to zero; anything more negative throws.
FeasibilityStep feasibility_update(const std::vector<double>& x_prev,
                                   const std::vector<double>& d_pred,
                                   const NullspaceBasis& basis,
                                   const SearchConfig& cfg,
                                   CorrectionState& state);

// Step bound along the projected barrier gradient g = 1/x:
// (g' P g) / ((P g)' diag(1/x^2) (P g)); +inf when P g = 0.
double barrier_step_upper_bound(const std::vector<double>& x,
                                const NullspaceBasis& basis);

// Prediction seam shared by the trained model and the test stubs: maps the
// instance graph and the previous iterate to one value per variable.
using Predictor =
    std::function<std::vector<double>(const ProblemGraph&, const std::vector<double>&)>;

Predictor model_predictor(const MpnnModel& model);

struct InferenceResult {
  std::vector<double> x;      // best iterate found
  double objective = 0.0;
  double violation = 0.0;     // scaled mean violation of the best iterate
  double max_residual = 0.0;  // ||A x - b||_inf of the best iterate
  bool has_candidate = true;  // false when no iterate met the threshold
  int iterations = 0;
  std::vector<std::vector<double>> iterates;  // x(0) .. x(T)
};

// Displacement-mode inference: rolls the predictor T_infer times from the
// feasible x0 through feasibility_update and returns the iterate (including
// x0) with the least objective.
InferenceResult infer_feasibility(const Predictor& pred, const LcqpInstance& inst,
                                  const NullspaceBasis& basis,
                                  const std::vector<double>& x0,
                                  const SearchConfig& cfg);

// Next-point-mode inference: x(t) = pred(graph, x(t-1)) from x0 (all ones when
// empty); the best objective is tracked over iterates, x0 included, whose
// max constraint residual is below cfg.delta.  When none qualifies the result
// keeps the last iterate and clears has_candidate.
InferenceResult infer_ipm_guided(const Predictor& pred, const LcqpInstance& inst,
                                 const SearchConfig& cfg,
                                 const std::vector<double>& x0 = {});

struct TrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  int batch = 8;              // minibatch size in instances
  std::uint64_t seed = 0;     // minibatch shuffling
  double val_fraction = 0.1;  // trailing share of instances held for logging
  int patience = 0;           // >0 stops after this many non-improving epochs
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;     // NaN when the validation split is empty
  double val_gap_pct = 0.0;  // NaN likewise
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int epochs_run = 0;
  bool early_stopped = false;
  double final_train_loss = 0.0;
};

// Displacement training: per instance and step, predict d(t) and take the loss
// against the oracle displacement x_star - x(t-1); the rollout then adds the
// barrier correction, projects, and steps.  Losses average over the rollout and
// the minibatch; one Adam step per minibatch.  The per-epoch validation gap
// reruns inference on the held-out split with t_train steps to keep epochs
// cheap.
TrainReport train_feasibility(MpnnModel& model,
                              const std::vector<LcqpInstance>& instances,
                              const SearchConfig& cfg, const TrainConfig& opt,
                              std::ostream* log = nullptr);

// Trajectory training: the model rolls out on its own predictions and each
// step is penalised against the recorded interior point of the same index.
// Instances must carry trajectories of length >= t_train.
TrainReport train_ipm_guided(MpnnModel& model,
                             const std::vector<LcqpInstance>& instances,
                             const SearchConfig& cfg, const TrainConfig& opt,
                             std::ostream* log = nullptr);

struct EvalRow {
  std::string name;
  double gap_pct = 0.0;
  double violation = 0.0;
  bool absolute_gap = false;
  bool has_candidate = true;
};

struct EvalReport {
  double mean_gap_pct = 0.0;    // over instances with a candidate
  double mean_violation = 0.0;  // likewise
  double candidate_rate = 1.0;
  std::vector<EvalRow> rows;
};

nlohmann::json eval_report_to_json(const EvalReport& report);

// Runs inference over a dataset (parallel across instances, model read-only)
// and aggregates the reported metrics.  Instances must carry x_star.
EvalReport evaluate(const MpnnModel& model,
                    const std::vector<std::pair<std::string, LcqpInstance>>& data,
                    const SearchConfig& cfg, int threads = 0);

}  // namespace lcqp
