#include "lcqp/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "lcqp/errors.hpp"
#include "lcqp/parallel.hpp"
#include "lcqp/rng.hpp"

namespace lcqp {

namespace {

constexpr double kNegativeDust = -1e-12;

void check_length(const std::vector<double>& v, int n, const char* what) {
  if (static_cast<int>(v.size()) != n)
    throw ValidationError(std::string(what) + " has length " +
                          std::to_string(v.size()) + ", expected " +
                          std::to_string(n));
}

void scale_grads(MpnnModel& grads, double factor) {
  for_each_affine(grads, [factor](Affine& a) {
    for (double& w : a.w) w *= factor;
    for (double& b : a.b) b *= factor;
  });
}

std::vector<double> ones(int n) { return std::vector<double>(n, 1.0); }

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

// Oracle displacement x_star - x_prev, the supervision target.
std::vector<double> displacement_target(const LcqpInstance& inst,
                                        const std::vector<double>& x_prev) {
  std::vector<double> d(inst.x_star.size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = inst.x_star[j] - x_prev[j];
  return d;
}

void require_x_star(const std::vector<LcqpInstance>& instances) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<int>(instances[i].x_star.size()) != instances[i].n)
      throw ValidationError("instance " + std::to_string(i) +
                            " carries no x_star; solve it first");
  }
}

struct SplitIndices {
  std::vector<std::size_t> train, val;
};

SplitIndices split_instances(std::size_t count, const TrainConfig& opt) {
  const int n = static_cast<int>(count);
  int val = static_cast<int>(std::lround(opt.val_fraction * n));
  val = std::clamp(val, 0, n > 1 ? n - 1 : 0);
  if (opt.patience > 0 && val == 0 && n > 1) val = 1;
  SplitIndices out;
  for (int i = 0; i < n - val; ++i) out.train.push_back(i);
  for (int i = n - val; i < n; ++i) out.val.push_back(i);
  return out;
}

void validate_train_config(const TrainConfig& opt) {
  if (opt.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (opt.batch < 1) throw ValidationError("batch size must be >= 1");
  if (!(opt.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0))
    throw ValidationError("val_fraction must lie in [0, 1)");
}

void log_epoch(std::ostream* log, const EpochLog& e, int total) {
  if (!log) return;
  *log << "epoch " << std::setw(4) << e.epoch << "/" << total << "  train "
       << std::scientific << std::setprecision(4) << e.train_loss;
  if (std::isnan(e.val_loss)) {
    *log << "  val n/a";
  } else {
    *log << "  val " << e.val_loss << "  val_gap " << std::fixed
         << std::setprecision(3) << e.val_gap_pct << "%";
  }
  *log << std::defaultfloat << "\n";
}

// Fisher-Yates with the shared splitmix stream; modulo bias is irrelevant at
// these sizes and keeps the shuffle platform-independent.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

void validate_search_config(const SearchConfig& cfg) {
  if (cfg.t_train < 1) throw ValidationError("t_train must be >= 1");
  if (cfg.t_infer < 0) throw ValidationError("t_infer must be >= 0");
  if (!(cfg.tau0 >= 0.0)) throw ValidationError("tau0 must be >= 0");
  if (!(cfg.eps_bar > 0.0)) throw ValidationError("eps_bar must be positive");
  if (!(cfg.delta >= 0.0)) throw ValidationError("delta must be >= 0");
}

double relative_gap_pct(double obj, double obj_ref, bool* absolute_out) {
  if (absolute_out) *absolute_out = false;
  if (obj_ref == 0.0) {
    if (absolute_out) *absolute_out = true;
    return std::abs(obj - obj_ref) * 100.0;
  }
  return std::abs((obj - obj_ref) / obj_ref) * 100.0;
}

double constraint_violation(const LcqpInstance& inst, const std::vector<double>& x) {
  if (inst.m == 0) return 0.0;
  check_length(x, inst.n, "x");
  std::vector<double> row_scale(inst.m, 0.0);
  for (const auto& e : inst.a.entries)
    row_scale[e.row] = std::max(row_scale[e.row], std::abs(e.value));
  const std::vector<double> ax = inst.a.multiply(x);
  double total = 0.0;
  for (int i = 0; i < inst.m; ++i) {
    const double scale = std::max(std::abs(inst.b[i]), row_scale[i]);
    total += std::abs(ax[i] - inst.b[i]) / (scale == 0.0 ? 1.0 : scale);
  }
  return total / inst.m;
}

double max_constraint_residual(const LcqpInstance& inst, const std::vector<double>& x) {
  check_length(x, inst.n, "x");
  const std::vector<double> ax = inst.a.multiply(x);
  double worst = 0.0;
  for (int i = 0; i < inst.m; ++i)
    worst = std::max(worst, std::abs(ax[i] - inst.b[i]));
  return worst;
}

double step_length_positivity(const std::vector<double>& x, const std::vector<double>& d) {
  if (x.size() != d.size())
    throw ValidationError("step_length_positivity: size mismatch");
  double alpha = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (d[i] < 0.0) alpha = std::min(alpha, x[i] / -d[i]);
  return std::clamp(alpha, 0.0, 1.0);
}

FeasibilityStep feasibility_update(const std::vector<double>& x_prev,
                                   const std::vector<double>& d_pred,
                                   const NullspaceBasis& basis,
                                   const SearchConfig& cfg,
                                   CorrectionState& state) {
  const int n = basis.n;
  check_length(x_prev, n, "x_prev");
  check_length(d_pred, n, "d_pred");

  std::vector<double> d(x_prev.size());
  for (std::size_t j = 0; j < d.size(); ++j)
    d[j] = d_pred[j] + state.tau / (x_prev[j] + cfg.eps_bar);

  FeasibilityStep out;
  out.d_tilde = basis.project(d);
  out.alpha = step_length_positivity(x_prev, out.d_tilde);
  out.x_next.resize(x_prev.size());
  for (std::size_t j = 0; j < x_prev.size(); ++j) {
    double next = x_prev[j] + out.alpha * out.d_tilde[j];
    if (next < 0.0) {
      // alpha * d can undershoot zero by a few ulps of the step magnitude;
      // anything beyond that dust is a real violation.
      const double dust = std::max(
          -kNegativeDust, 1e-14 * (x_prev[j] + out.alpha * std::abs(out.d_tilde[j])));
      if (next >= -dust) {
        next = 0.0;
      } else {
        char msg[96];
        std::snprintf(msg, sizeof(msg),
                      "feasibility step left the nonnegative orthant: x[%zu] = %.3e", j, next);
        throw ValidationError(msg);
      }
    }
    out.x_next[j] = next;
  }
  state.tau /= 2.0;
  return out;
}

double barrier_step_upper_bound(const std::vector<double>& x,
                                const NullspaceBasis& basis) {
  check_length(x, basis.n, "x");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = 1.0 / x[i];
  const std::vector<double> pg = basis.project(g);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += g[i] * pg[i];
    den += pg[i] * pg[i] / (x[i] * x[i]);
  }
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

Predictor model_predictor(const MpnnModel& model) {
  return [&model](const ProblemGraph& graph, const std::vector<double>& x_prev) {
    return predict(model, graph, x_prev);
  };
}

InferenceResult infer_feasibility(const Predictor& pred, const LcqpInstance& inst,
                                  const NullspaceBasis& basis,
                                  const std::vector<double>& x0,
                                  const SearchConfig& cfg) {
  validate_search_config(cfg);
  check_length(x0, inst.n, "x0");
  const ProblemGraph graph = encode_graph(inst, false);

  InferenceResult out;
  out.iterations = cfg.t_infer;
  std::vector<double> x = x0;
  out.iterates.push_back(x);
  out.x = x;
  out.objective = objective_value(inst, x);

  CorrectionState state{cfg.tau0};
  for (int t = 1; t <= cfg.t_infer; ++t) {
    const std::vector<double> d_pred = pred(graph, x);
    x = feasibility_update(x, d_pred, basis, cfg, state).x_next;
    out.iterates.push_back(x);
    const double obj = objective_value(inst, x);
    if (obj < out.objective) {
      out.objective = obj;
      out.x = x;
    }
  }
  out.violation = constraint_violation(inst, out.x);
  out.max_residual = max_constraint_residual(inst, out.x);
  out.has_candidate = true;
  return out;
}

InferenceResult infer_ipm_guided(const Predictor& pred, const LcqpInstance& inst,
                                 const SearchConfig& cfg,
                                 const std::vector<double>& x0) {
  validate_search_config(cfg);
  std::vector<double> x = x0.empty() ? ones(inst.n) : x0;
  check_length(x, inst.n, "x0");
  const ProblemGraph graph = encode_graph(inst, true);

  InferenceResult out;
  out.iterations = cfg.t_infer;
  out.has_candidate = false;
  out.objective = std::numeric_limits<double>::infinity();
  out.iterates.push_back(x);

  auto consider = [&](const std::vector<double>& cand) {
    if (max_constraint_residual(inst, cand) >= cfg.delta) return;
    const double obj = objective_value(inst, cand);
    if (!out.has_candidate || obj < out.objective) {
      out.has_candidate = true;
      out.objective = obj;
      out.x = cand;
    }
  };

  consider(x);
  for (int t = 1; t <= cfg.t_infer; ++t) {
    x = pred(graph, x);
    out.iterates.push_back(x);
    consider(x);
  }
  if (!out.has_candidate) {
    out.x = x;
    out.objective = objective_value(inst, x);
  }
  out.violation = constraint_violation(inst, out.x);
  out.max_residual = max_constraint_residual(inst, out.x);
  return out;
}

TrainReport train_feasibility(MpnnModel& model,
                              const std::vector<LcqpInstance>& instances,
                              const SearchConfig& cfg, const TrainConfig& opt,
                              std::ostream* log) {
  validate_search_config(cfg);
  validate_train_config(opt);
  if (instances.empty()) throw ValidationError("no training instances");
  if (model.cfg.mode != Mode::feas)
    throw ValidationError("train_feasibility needs a displacement-mode model");
  require_x_star(instances);

  const std::size_t count = instances.size();
  std::vector<ProblemGraph> graphs(count);
  std::vector<NullspaceBasis> bases(count);
  std::vector<std::vector<double>> starts(count);
  std::vector<double> obj_star(count);
  for (std::size_t i = 0; i < count; ++i) {
    graphs[i] = encode_graph(instances[i], false);
    bases[i] = compute_nullspace(instances[i].a);
    starts[i] = feasible_initial_point(instances[i]);
    obj_star[i] = objective_value(instances[i], instances[i].x_star);
  }

  const SplitIndices split = split_instances(count, opt);
  std::vector<std::size_t> order = split.train;
  Rng shuffle_rng(opt.seed);

  MpnnModel grads = make_grads(model);
  AdamState adam;
  MpnnCache cache;

  // Rollout shared by the gradient pass and the validation pass.
  auto rollout = [&](std::size_t i, bool with_grads) {
    const LcqpInstance& inst = instances[i];
    CorrectionState state{cfg.tau0};
    std::vector<double> x = starts[i];
    double loss = 0.0;
    for (int t = 1; t <= cfg.t_train; ++t) {
      const std::vector<double> target = displacement_target(inst, x);
      if (with_grads) {
        loss += loss_and_grad(model, graphs[i], x, target, {}, grads, cache);
      } else {
        forward(model, graphs[i], x, cache);
        for (std::size_t j = 0; j < target.size(); ++j) {
          const double diff = cache.output[j] - target[j];
          loss += diff * diff;
        }
      }
      x = feasibility_update(x, cache.output, bases[i], cfg, state).x_next;
    }
    return loss / cfg.t_train;
  };

  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  SearchConfig val_cfg = cfg;
  val_cfg.t_infer = cfg.t_train;  // keeps the per-epoch gap check cheap

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      zero_grads(grads);
      for (std::size_t k = start; k < stop; ++k)
        train_loss += rollout(order[k], true);
      scale_grads(grads, 1.0 / (static_cast<double>(stop - start) * cfg.t_train));
      adam_step(model, grads, adam, opt.lr);
    }
    train_loss /= static_cast<double>(order.size());

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss;
    if (split.val.empty()) {
      entry.val_loss = quiet_nan();
      entry.val_gap_pct = quiet_nan();
    } else {
      double val_loss = 0.0, val_gap = 0.0;
      const Predictor pred = model_predictor(model);
      for (std::size_t i : split.val) {
        val_loss += rollout(i, false);
        const InferenceResult res =
            infer_feasibility(pred, instances[i], bases[i], starts[i], val_cfg);
        val_gap += relative_gap_pct(res.objective, obj_star[i]);
      }
      entry.val_loss = val_loss / split.val.size();
      entry.val_gap_pct = val_gap / split.val.size();
    }
    log_epoch(log, entry, opt.epochs);
    report.epochs.push_back(entry);
    report.epochs_run = epoch;
    report.final_train_loss = train_loss;

    if (!split.val.empty() && opt.patience > 0) {
      if (entry.val_loss < best_val) {
        best_val = entry.val_loss;
        bad_epochs = 0;
      } else if (++bad_epochs >= opt.patience) {
        report.early_stopped = true;
        break;
      }
    }
  }
  return report;
}

TrainReport train_ipm_guided(MpnnModel& model,
                             const std::vector<LcqpInstance>& instances,
                             const SearchConfig& cfg, const TrainConfig& opt,
                             std::ostream* log) {
  validate_search_config(cfg);
  validate_train_config(opt);
  if (instances.empty()) throw ValidationError("no training instances");
  if (model.cfg.mode != Mode::ipm)
    throw ValidationError("train_ipm_guided needs a next-point-mode model");
  require_x_star(instances);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<int>(instances[i].trajectory.size()) < cfg.t_train)
      throw ValidationError("instance " + std::to_string(i) + " trajectory has " +
                            std::to_string(instances[i].trajectory.size()) +
                            " points, need " + std::to_string(cfg.t_train) +
                            "; re-solve with more iterations");
    for (const auto& point : instances[i].trajectory)
      check_length(point, instances[i].n, "trajectory point");
  }

  const std::size_t count = instances.size();
  std::vector<ProblemGraph> graphs(count);
  std::vector<double> obj_star(count);
  for (std::size_t i = 0; i < count; ++i) {
    graphs[i] = encode_graph(instances[i], true);
    obj_star[i] = objective_value(instances[i], instances[i].x_star);
  }

  const SplitIndices split = split_instances(count, opt);
  std::vector<std::size_t> order = split.train;
  Rng shuffle_rng(opt.seed);

  MpnnModel grads = make_grads(model);
  AdamState adam;
  MpnnCache cache;
  const std::vector<double> empty_offset;

  // Self-rollout: the prediction at step t feeds step t + 1; the loss compares
  // against the recorded iterate of the same index.
  auto rollout = [&](std::size_t i, bool with_grads) {
    const LcqpInstance& inst = instances[i];
    std::vector<double> x = ones(inst.n);
    double loss = 0.0;
    for (int t = 1; t <= cfg.t_train; ++t) {
      const std::vector<double>& target = inst.trajectory[t - 1];
      if (with_grads) {
        loss += loss_and_grad(model, graphs[i], x, target, empty_offset, grads, cache);
      } else {
        forward(model, graphs[i], x, cache);
        for (std::size_t j = 0; j < target.size(); ++j) {
          const double diff = cache.output[j] - target[j];
          loss += diff * diff;
        }
      }
      x = cache.output;
    }
    return loss / cfg.t_train;
  };

  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  SearchConfig val_cfg = cfg;
  val_cfg.t_infer = cfg.t_train;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      zero_grads(grads);
      for (std::size_t k = start; k < stop; ++k)
        train_loss += rollout(order[k], true);
      scale_grads(grads, 1.0 / (static_cast<double>(stop - start) * cfg.t_train));
      adam_step(model, grads, adam, opt.lr);
    }
    train_loss /= static_cast<double>(order.size());

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss;
    if (split.val.empty()) {
      entry.val_loss = quiet_nan();
      entry.val_gap_pct = quiet_nan();
    } else {
      double val_loss = 0.0, val_gap = 0.0;
      int gap_count = 0;
      const Predictor pred = model_predictor(model);
      for (std::size_t i : split.val) {
        val_loss += rollout(i, false);
        const InferenceResult res = infer_ipm_guided(pred, instances[i], val_cfg);
        if (res.has_candidate) {
          val_gap += relative_gap_pct(res.objective, obj_star[i]);
          ++gap_count;
        }
      }
      entry.val_loss = val_loss / split.val.size();
      entry.val_gap_pct = gap_count > 0 ? val_gap / gap_count : quiet_nan();
    }
    log_epoch(log, entry, opt.epochs);
    report.epochs.push_back(entry);
    report.epochs_run = epoch;
    report.final_train_loss = train_loss;

    if (!split.val.empty() && opt.patience > 0) {
      if (entry.val_loss < best_val) {
        best_val = entry.val_loss;
        bad_epochs = 0;
      } else if (++bad_epochs >= opt.patience) {
        report.early_stopped = true;
        break;
      }
    }
  }
  return report;
}

nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"name", row.name},
                    {"gap_pct", row.gap_pct},
                    {"violation", row.violation},
                    {"absolute_gap", row.absolute_gap},
                    {"has_candidate", row.has_candidate}});
  }
  return nlohmann::json{{"mean_gap_pct", report.mean_gap_pct},
                        {"mean_violation", report.mean_violation},
                        {"candidate_rate", report.candidate_rate},
                        {"per_instance", std::move(rows)}};
}

EvalReport evaluate(const MpnnModel& model,
                    const std::vector<std::pair<std::string, LcqpInstance>>& data,
                    const SearchConfig& cfg, int threads) {
  validate_search_config(cfg);
  if (data.empty()) throw ValidationError("no instances to evaluate");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data[i].second.x_star.size()) != data[i].second.n)
      throw ValidationError("instance " + data[i].first +
                            " carries no x_star; solve the dataset first");
  }

  EvalReport report;
  report.rows.resize(data.size());
  std::vector<std::string> failures(data.size());
  const Predictor pred = model_predictor(model);

  parallel_for(
      static_cast<int>(data.size()),
      [&](std::size_t i) {
        const auto& [name, inst] = data[i];
        EvalRow& row = report.rows[i];
        row.name = name;
        try {
          InferenceResult res;
          if (model.cfg.mode == Mode::feas) {
            const NullspaceBasis basis = compute_nullspace(inst.a);
            const std::vector<double> x0 = feasible_initial_point(inst);
            res = infer_feasibility(pred, inst, basis, x0, cfg);
          } else {
            res = infer_ipm_guided(pred, inst, cfg);
          }
          row.has_candidate = res.has_candidate;
          row.violation = res.violation;
          row.gap_pct =
              res.has_candidate
                  ? relative_gap_pct(res.objective,
                                     objective_value(inst, inst.x_star),
                                     &row.absolute_gap)
                  : quiet_nan();
        } catch (const std::exception& err) {
          failures[i] = err.what();
        }
      },
      threads);

  for (std::size_t i = 0; i < data.size(); ++i)
    if (!failures[i].empty())
      throw ValidationError("evaluation of " + data[i].first + " failed: " +
                            failures[i]);

  double gap = 0.0, violation = 0.0;
  int candidates = 0;
  for (const auto& row : report.rows) {
    if (!row.has_candidate) continue;
    gap += row.gap_pct;
    violation += row.violation;
    ++candidates;
  }
  report.candidate_rate = static_cast<double>(candidates) / report.rows.size();
  report.mean_gap_pct = candidates > 0 ? gap / candidates : quiet_nan();
  report.mean_violation = candidates > 0 ? violation / candidates : quiet_nan();
  return report;
}

}  // namespace lcqp
