// Acceptance gate: one check per shipped guarantee.  Every case prints a
// single summary line so a failed run names the broken promise directly;
// tolerances are pinned here and nowhere else.
#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcqp/datasets.hpp"
#include "lcqp/errors.hpp"
#include "lcqp/graph.hpp"
#include "lcqp/ipm.hpp"
#include "lcqp/mpnn.hpp"
#include "lcqp/nullspace.hpp"
#include "lcqp/oracle.hpp"
#include "lcqp/pipelines.hpp"
#include "lcqp/rng.hpp"
#include "lcqp/types.hpp"

#include "support.hpp"

namespace fs = std::filesystem;
using namespace lcqp;
using testsupport::TempDir;
using testsupport::run_command;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool note(int k, const char* name, bool ok, const std::string& detail = "") {
  if (detail.empty()) {
    std::printf("ACCEPTANCE %2d (%s): %s\n", k, name, ok ? "PASS" : "FAIL");
  } else {
    std::printf("ACCEPTANCE %2d (%s): %s [%s]\n", k, name, ok ? "PASS" : "FAIL",
                detail.c_str());
  }
  std::fflush(stdout);
  return ok;
}

GenConfig make_cfg(Family family, int n, int m, std::uint64_t seed) {
  GenConfig cfg;
  cfg.family = family;
  cfg.n = n;
  cfg.m = m;
  cfg.seed = seed;
  return cfg;
}

struct LabeledSet {
  std::vector<LcqpInstance> instances;
  std::vector<IpmResult> results;
};

// Generates and solves a batch, attaching the solution and trajectory to each
// instance.  The base seeds below were picked so that every draw is feasible
// and the solver converges; a failure here means the solver regressed.
LabeledSet solve_batch(GenConfig cfg, int count) {
  LabeledSet set;
  IpmConfig ipm;
  ipm.record_trajectory = true;
  for (int i = 0; i < count; ++i) {
    LcqpInstance inst = gen_instance(cfg, i);
    IpmResult res = ipm_solve(inst, ipm);
    REQUIRE_MESSAGE(res.converged, "batch seed " << cfg.seed << " index " << i);
    inst.x_star = res.x;
    inst.trajectory = res.trajectory;
    set.instances.push_back(std::move(inst));
    set.results.push_back(std::move(res));
  }
  return set;
}

const LabeledSet& small_set() {
  static LabeledSet set = solve_batch(make_cfg(Family::generic, 8, 4, 7100), 50);
  return set;
}

// Enumerated optima for small_set, shared by the criteria that need an exact
// reference.  Unlike the solver's x_star these satisfy Ax = b to working
// precision, so displacements toward them survive the nullspace projection.
const std::vector<BruteForceResult>& brute_refs() {
  static std::vector<BruteForceResult> refs = [] {
    std::vector<BruteForceResult> out;
    for (const LcqpInstance& inst : small_set().instances)
      out.push_back(brute_force_optimum(inst));
    return out;
  }();
  return refs;
}

const LabeledSet& desk_train_set() {
  static LabeledSet set = solve_batch(make_cfg(Family::generic, 20, 10, 7580), 100);
  return set;
}

const LabeledSet& desk_held_set() {
  static LabeledSet set = solve_batch(make_cfg(Family::generic, 20, 10, 7700), 20);
  return set;
}

std::vector<std::pair<std::string, LcqpInstance>> held_pairs() {
  std::vector<std::pair<std::string, LcqpInstance>> out;
  const auto& set = desk_held_set();
  for (std::size_t i = 0; i < set.instances.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "held_%02zu", i);
    out.emplace_back(name, set.instances[i]);
  }
  return out;
}

SparseMatrix dense_gauss(int rows, int cols, Rng& rng) {
  SparseMatrix a;
  a.rows = rows;
  a.cols = cols;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a.add(i, j, rng.normal());
  a.sort_entries();
  return a;
}

// Random full-row-rank constraint matrix; rank failures redraw from a
// shifted stream so the sequence stays deterministic.
SparseMatrix full_rank_gauss(int rows, int cols, std::uint64_t seed,
                             NullspaceBasis* basis_out) {
  for (int attempt = 0; attempt < 5; ++attempt) {
    Rng rng(seed + 10007ULL * static_cast<std::uint64_t>(attempt));
    SparseMatrix a = dense_gauss(rows, cols, rng);
    try {
      NullspaceBasis basis = compute_nullspace(a);
      if (basis_out != nullptr) *basis_out = std::move(basis);
      return a;
    } catch (const SolveError&) {
      continue;
    }
  }
  REQUIRE_MESSAGE(false, "no full-rank draw near seed " << seed);
  return {};
}

double sse_loss(const MpnnModel& model, const ProblemGraph& graph,
                const std::vector<double>& x_prev, const std::vector<double>& target) {
  const std::vector<double> out = predict(model, graph, x_prev);
  double loss = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double diff = out[i] - target[i];
    loss += diff * diff;
  }
  return loss;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string cli() { return std::string(LCQP_CLI_PATH); }

testsupport::CommandResult run_in(const fs::path& dir, const std::string& args) {
  return run_command("cd " + dir.string() + " && " + cli() + " " + args + " 2>&1");
}

}  // namespace

TEST_CASE("1: solver objectives match the exhaustive reference") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& set = small_set();

  int matched = 0;
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (std::size_t i = 0; i < set.instances.size(); ++i) {
    const BruteForceResult& bf = brute_refs()[i];
    const IpmResult& res = set.results[i];
    const double diff = std::abs(res.objective - (bf.feasible ? bf.objective : 0.0));
    const double kkt = std::max({res.kkt.primal, res.kkt.dual, res.kkt.comp});
    worst_gap = std::max(worst_gap, diff);
    worst_kkt = std::max(worst_kkt, kkt);
    const bool obj_ok = diff <= 1e-5 || diff <= 1e-5 * std::abs(bf.objective);
    if (bf.feasible && res.converged && obj_ok && kkt <= 1e-6) ++matched;
  }
  const double dt = seconds_since(t0);

  char detail[128];
  std::snprintf(detail, sizeof(detail), "%d/50 matched, worst gap %.2e, worst KKT %.2e, %.1f s",
                matched, worst_gap, worst_kkt, dt);
  CHECK(note(1, "solver objectives match the exhaustive reference", matched == 50 && dt < 10.0,
             detail));
}

TEST_CASE("2: augmented solves are accurate or report breakdown") {
  int matched = 0, flagged = 0, silent_bad = 0, direct_bad = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 3 + k % 8;              // up to 10 variables
    const int m = 1 + (k * 7 + 3) % (n - 1);
    const auto sys = testsupport::random_interior_system(n, m, 7200 + k);

    const Eigen::VectorXd direct = direct_augmented_solve(sys.k, sys.rhs);
    const double resid = (sys.k * direct - sys.rhs).lpNorm<Eigen::Infinity>();
    if (resid > 1e-8 * (sys.rhs.lpNorm<Eigen::Infinity>() + 1.0)) ++direct_bad;

    bool breakdown = false;
    const Eigen::VectorXd w =
        cg_augmented(sys.k, sys.rhs, static_cast<int>(sys.rhs.size()), 1e-8, &breakdown);
    if (breakdown) {
      ++flagged;
    } else if ((w - direct).lpNorm<Eigen::Infinity>() <=
               1e-6 * std::max(1.0, direct.lpNorm<Eigen::Infinity>())) {
      ++matched;
    } else {
      ++silent_bad;
    }
  }

  char detail[128];
  std::snprintf(detail, sizeof(detail), "direct bad %d, matched %d, breakdown %d, silent %d",
                direct_bad, matched, flagged, silent_bad);
  CHECK(note(2, "augmented solves are accurate or report breakdown",
             direct_bad == 0 && silent_bad == 0, detail));
}

TEST_CASE("3: simulation lockstep verifies within tolerance and budget") {
  TempDir tmp;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res =
      run_in(tmp.path(), "verify-sim --n 10 --m 5 --trials 20 --seed 73 --tol 1e-9");
  const double dt = seconds_since(t0);

  const bool pass_run = res.exit_code == 0 && res.out.find("PASS") != std::string::npos &&
                        res.out.find(", ok)") != std::string::npos;
  // The gate must be live: an unsatisfiable tolerance exits nonzero.
  const auto breach =
      run_in(tmp.path(), "verify-sim --n 10 --m 5 --trials 20 --seed 73 --tol -1");
  const bool gate_live = breach.exit_code == 1;

  char detail[96];
  std::snprintf(detail, sizeof(detail), "exit %d, breach exit %d, %.1f s", res.exit_code,
                breach.exit_code, dt);
  CHECK_MESSAGE(note(3, "simulation lockstep verifies within tolerance and budget",
                     pass_run && gate_live && dt < 5.0, detail),
                res.out);
}

TEST_CASE("4: feasibility rollouts keep every iterate on the constraints") {
  MpnnConfig mcfg;
  mcfg.mode = Mode::feas;
  mcfg.layers = 2;
  mcfg.width = 8;
  const MpnnModel model = init_model(mcfg, 7441);
  const Predictor pred = model_predictor(model);

  SearchConfig cfg;
  cfg.t_infer = 32;

  double worst_resid = 0.0, worst_entry = 0.0;
  for (const LcqpInstance& inst : small_set().instances) {
    const NullspaceBasis basis = compute_nullspace(inst.a);
    const std::vector<double> x0 = feasible_initial_point(inst);
    const InferenceResult res = infer_feasibility(pred, inst, basis, x0, cfg);
    REQUIRE(res.iterates.size() == 33);
    for (const std::vector<double>& it : res.iterates) {
      worst_resid = std::max(worst_resid, max_constraint_residual(inst, it));
      worst_entry = std::min(worst_entry, *std::min_element(it.begin(), it.end()));
    }
  }

  char detail[96];
  std::snprintf(detail, sizeof(detail), "worst residual %.2e, most negative entry %.2e",
                worst_resid, worst_entry);
  CHECK(note(4, "feasibility rollouts keep every iterate on the constraints",
             worst_resid <= 1e-7 && worst_entry >= -1e-12, detail));
}

TEST_CASE("5: the oracle displacement reaches the optimum in one step") {
  SearchConfig cfg;
  cfg.t_infer = 1;
  cfg.tau0 = 0.0;

  int exact = 0;
  double worst = 0.0;
  const auto& set = small_set();
  for (std::size_t i = 0; i < set.instances.size(); ++i) {
    const LcqpInstance& inst = set.instances[i];
    const BruteForceResult& bf = brute_refs()[i];
    REQUIRE(bf.feasible);
    const std::vector<double>& xs = bf.x;
    const Predictor oracle = [&xs](const ProblemGraph&, const std::vector<double>& x_prev) {
      std::vector<double> d(xs.size());
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = xs[j] - x_prev[j];
      return d;
    };
    const NullspaceBasis basis = compute_nullspace(inst.a);
    const InferenceResult res =
        infer_feasibility(oracle, inst, basis, feasible_initial_point(inst), cfg);
    const double gap = std::abs(res.objective - bf.objective);
    worst = std::max(worst, gap);
    if (gap <= 1e-10 * std::max(1.0, std::abs(bf.objective))) ++exact;
  }

  char detail[64];
  std::snprintf(detail, sizeof(detail), "%d/50 exact, worst gap %.2e", exact, worst);
  CHECK(note(5, "the oracle displacement reaches the optimum in one step", exact == 50, detail));
}

TEST_CASE("6: the projector annihilates, is idempotent, and never expands") {
  double worst_annihilate = 0.0, worst_idempotent = 0.0;
  bool expansive = false;
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 11;  // up to 12 variables
    const int m = 1 + k % (n - 1 > 0 ? n - 1 : 1);
    NullspaceBasis basis;
    const SparseMatrix a = full_rank_gauss(std::min(m, n - 1), n, 7400 + k, &basis);

    Rng rng(7400ULL + k + 0x77ULL);
    std::vector<double> d(n);
    for (double& v : d) v = rng.normal();

    const std::vector<double> pd = basis.project(d);
    const std::vector<double> ppd = basis.project(pd);
    worst_annihilate = std::max(worst_annihilate, testsupport::linf(a.multiply(pd)));
    double diff = 0.0;
    for (int j = 0; j < n; ++j) diff = std::max(diff, std::abs(ppd[j] - pd[j]));
    worst_idempotent = std::max(worst_idempotent, diff);
    if (testsupport::l2(pd) > testsupport::l2(d) * (1.0 + 1e-12)) expansive = true;
  }

  char detail[96];
  std::snprintf(detail, sizeof(detail), "worst A*Pd %.2e, worst P^2-P %.2e", worst_annihilate,
                worst_idempotent);
  CHECK(note(6, "the projector annihilates, is idempotent, and never expands",
             worst_annihilate <= 1e-10 && worst_idempotent <= 1e-10 && !expansive, detail));
}

TEST_CASE("7: backprop agrees with central finite differences") {
  const double h = 1e-5;
  double worst = 0.0;
  for (int g = 0; g < 3; ++g) {
    const LcqpInstance inst = testsupport::random_instance(4, 2, 7501 + g, true);
    const ProblemGraph graph = encode_graph(inst, false);

    MpnnConfig mcfg;
    mcfg.mode = Mode::feas;
    mcfg.layers = 2;
    mcfg.width = 8;
    MpnnModel model = init_model(mcfg, 7511 + g);

    Rng rng(7521ULL + g);
    std::vector<double> x_prev(inst.n), target(inst.n);
    for (double& v : x_prev) v = rng.uniform(0.2, 1.5);
    for (double& v : target) v = rng.normal();

    MpnnModel grads = make_grads(model);
    MpnnCache cache;
    loss_and_grad(model, graph, x_prev, target, {}, grads, cache);

    std::vector<double*> params;
    for_each_affine(model, [&](Affine& a) {
      for (double& w : a.w) params.push_back(&w);
      for (double& b : a.b) params.push_back(&b);
    });
    std::vector<const double*> grad_ptrs;
    for_each_affine(grads, [&](Affine& a) {
      for (double& w : a.w) grad_ptrs.push_back(&w);
      for (double& b : a.b) grad_ptrs.push_back(&b);
    });
    REQUIRE(params.size() == grad_ptrs.size());

    for (std::size_t p = 0; p < params.size(); ++p) {
      const double orig = *params[p];
      *params[p] = orig + h;
      const double up = sse_loss(model, graph, x_prev, target);
      *params[p] = orig - h;
      const double down = sse_loss(model, graph, x_prev, target);
      *params[p] = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, testsupport::rel_err(fd, *grad_ptrs[p]));
    }
  }

  char detail[48];
  std::snprintf(detail, sizeof(detail), "worst relative error %.2e", worst);
  CHECK(note(7, "backprop agrees with central finite differences", worst <= 1e-4, detail));
}

TEST_CASE("8: displacement training reaches small gap and violation") {
  const auto& train = desk_train_set();
  const auto held = held_pairs();

  MpnnConfig mcfg;
  mcfg.mode = Mode::feas;
  mcfg.layers = 4;
  mcfg.width = 32;
  MpnnModel model = init_model(mcfg, 7801);

  SearchConfig scfg;
  scfg.t_train = 8;
  TrainConfig opt;
  opt.epochs = 40;
  opt.lr = 3e-3;
  opt.batch = 8;
  opt.seed = 7802;
  opt.val_fraction = 0.0;
  opt.patience = 0;

  const auto t0 = std::chrono::steady_clock::now();
  const TrainReport rep = train_feasibility(model, train.instances, scfg, opt, nullptr);
  SearchConfig ecfg;
  ecfg.t_infer = 32;
  const EvalReport ev = evaluate(model, held, ecfg, 1);
  const double dt = seconds_since(t0);

  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "mean gap %.2f%%, mean violation %.2e, loss %.3g, %.0f s", ev.mean_gap_pct,
                ev.mean_violation, rep.final_train_loss, dt);
  CHECK(note(8, "displacement training reaches small gap and violation",
             ev.mean_gap_pct <= 5.0 && ev.mean_violation <= 1e-7 && dt <= 900.0, detail));
}

TEST_CASE("9: trajectory-guided inference yields near-feasible candidates") {
  MpnnConfig mcfg;
  mcfg.mode = Mode::ipm;
  mcfg.layers = 4;
  mcfg.width = 32;
  MpnnModel model = init_model(mcfg, 7901);

  SearchConfig scfg;
  scfg.t_train = 8;
  TrainConfig opt;
  opt.epochs = 25;
  opt.lr = 3e-3;
  opt.batch = 8;
  opt.seed = 7902;
  opt.val_fraction = 0.0;
  opt.patience = 0;

  const TrainReport rep = train_ipm_guided(model, desk_train_set().instances, scfg, opt, nullptr);
  SearchConfig ecfg;
  ecfg.t_infer = 32;
  ecfg.delta = 1e-2;
  const EvalReport ev = evaluate(model, held_pairs(), ecfg, 1);

  char detail[128];
  std::snprintf(detail, sizeof(detail), "candidate rate %.2f, mean gap %.2f%%, loss %.3g",
                ev.candidate_rate, ev.mean_gap_pct, rep.final_train_loss);
  CHECK(note(9, "trajectory-guided inference yields near-feasible candidates",
             ev.candidate_rate >= 0.90 && ev.mean_gap_pct <= 15.0, detail));
}

TEST_CASE("10: equal seeds give byte-identical artifacts") {
  TempDir tmp;
  bool ok = true;

  // gen twice into separate directories.
  const fs::path g1 = tmp.path() / "g1";
  const fs::path g2 = tmp.path() / "g2";
  const std::string gen_args = "gen --family generic --n 6 --m 3 --count 2 --seed 7314 --out ";
  ok = ok && run_in(tmp.path(), gen_args + g1.string()).exit_code == 0;
  ok = ok && run_in(tmp.path(), gen_args + g2.string()).exit_code == 0;
  const bool gen_ok = ok && slurp(g1 / "instance_0000.json") == slurp(g2 / "instance_0000.json") &&
                      slurp(g1 / "instance_0001.json") == slurp(g2 / "instance_0001.json") &&
                      slurp(g1 / "manifest.json") == slurp(g2 / "manifest.json");

  // solve twice over copies of the same instance; reports and rewritten
  // files must agree modulo wall time.
  const fs::path s1 = tmp.path() / "s1.json";
  const fs::path s2 = tmp.path() / "s2.json";
  fs::copy_file(g1 / "instance_0000.json", s1);
  fs::copy_file(g1 / "instance_0000.json", s2);
  auto r1 = run_in(tmp.path(), "solve --emit-trajectory --instance " + s1.string());
  auto r2 = run_in(tmp.path(), "solve --emit-trajectory --instance " + s2.string());
  bool solve_ok = r1.exit_code == 0 && r2.exit_code == 0 && slurp(s1) == slurp(s2);
  if (solve_ok) {
    nlohmann::json j1 = nlohmann::json::parse(r1.out);
    nlohmann::json j2 = nlohmann::json::parse(r2.out);
    testsupport::strip_volatile(j1);
    testsupport::strip_volatile(j2);
    solve_ok = j1 == j2;
  }

  // train twice on a tiny labelled dataset.
  const fs::path td = tmp.path() / "td";
  bool train_ok = run_in(tmp.path(), "gen --family generic --n 6 --m 3 --count 5 --seed 7315"
                                     " --out " + td.string()).exit_code == 0;
  for (int i = 0; i < 5 && train_ok; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "instance_%04d.json", i);
    train_ok = run_in(tmp.path(), "solve --emit-trajectory --instance " +
                                      (td / name).string()).exit_code == 0;
  }
  const std::string train_args = " --mode feas --data " + td.string() +
                                 " --epochs 2 --T 2 --layers 1 --width 4 --batch 2"
                                 " --val-fraction 0 --seed 9 --model-out ";
  const fs::path m1 = tmp.path() / "m1.json";
  const fs::path m2 = tmp.path() / "m2.json";
  train_ok = train_ok && run_in(tmp.path(), "train" + train_args + m1.string()).exit_code == 0;
  train_ok = train_ok && run_in(tmp.path(), "train" + train_args + m2.string()).exit_code == 0;
  train_ok = train_ok && slurp(m1) == slurp(m2);

  char detail[96];
  std::snprintf(detail, sizeof(detail), "gen %s, solve %s, train %s", gen_ok ? "ok" : "DIFF",
                solve_ok ? "ok" : "DIFF", train_ok ? "ok" : "DIFF");
  CHECK(note(10, "equal seeds give byte-identical artifacts", gen_ok && solve_ok && train_ok,
             detail));
}

TEST_CASE("11: half the barrier step bound strictly decreases the barrier") {
  int decreased = 0;
  bool stayed_positive = true;
  for (int k = 0; k < 20; ++k) {
    const int n = 4 + k % 7;
    const int m = 1 + k % 3;
    NullspaceBasis basis;
    full_rank_gauss(m, n, 7950 + k, &basis);

    Rng rng(7950ULL + k + 0x131ULL);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(0.1, 2.0);

    std::vector<double> g(n);
    for (int j = 0; j < n; ++j) g[j] = 1.0 / x[j];
    const std::vector<double> u = basis.project(g);
    const double bound = barrier_step_upper_bound(x, basis);
    REQUIRE(std::isfinite(bound));
    REQUIRE(bound > 0.0);

    const double alpha = 0.5 * bound;
    double before = 0.0, after = 0.0;
    bool positive = true;
    for (int j = 0; j < n; ++j) {
      const double next = x[j] + alpha * u[j];
      if (next <= 0.0) positive = false;
      before -= std::log(x[j]);
      if (positive) after -= std::log(next);
    }
    if (!positive) {
      stayed_positive = false;
      continue;
    }
    if (after < before) ++decreased;
  }

  char detail[64];
  std::snprintf(detail, sizeof(detail), "%d/20 decreased, positivity %s", decreased,
                stayed_positive ? "kept" : "LOST");
  CHECK(note(11, "half the barrier step bound strictly decreases the barrier",
             stayed_positive && decreased == 20, detail));
}
