// lcqp: generate LCQP datasets, solve them with the interior-point reference
// solver, train/apply the graph-network predictors, and check the
// message-passing simulation against the solver.
//
// stdout carries results (JSON), stderr carries logs.  Exit codes: 0 success,
// 1 tolerance/validation failure, 2 usage error.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lcqp/datasets.hpp"
#include "lcqp/errors.hpp"
#include "lcqp/ipm.hpp"
#include "lcqp/json_io.hpp"
#include "lcqp/mpnn.hpp"
#include "lcqp/nullspace.hpp"
#include "lcqp/parallel.hpp"
#include "lcqp/pipelines.hpp"
#include "lcqp/simproof.hpp"
#include "lcqp/types.hpp"

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

json versions_json() {
  return json{
      {"lcqp", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
      {"cli11", CLI11_VERSION},
      {"compiler", __VERSION__},
  };
}

// One manifest per run, next to the first output (current directory when the
// run writes no files).  wall_time_sec is the only non-reproducible field.
void write_run_manifest(const std::string& command, const json& config,
                        std::uint64_t seed, double wall_time_sec,
                        const std::vector<std::string>& outputs) {
  namespace fs = std::filesystem;
  fs::path dir =
      outputs.empty() ? fs::current_path() : fs::path(outputs.front()).parent_path();
  if (dir.empty()) dir = fs::current_path();
  const json j{{"command", command},       {"config", config},
               {"seed", seed},             {"versions", versions_json()},
               {"wall_time_sec", wall_time_sec}, {"outputs", outputs}};
  lcqp::save_json((dir / "run_manifest.json").string(), j);
}

// Config-file overrides: --config FILE holds a JSON object keyed by long flag
// names (no leading dashes).  Values are applied to the option defaults before
// parsing, so explicit command-line flags always win.
using OverrideTable =
    std::map<std::string, std::vector<std::function<void(const json&)>>>;

template <class T>
void bind_key(OverrideTable& table, const std::string& key, T& var) {
  table[key].push_back([&var](const json& v) { var = v.get<T>(); });
}

std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg(argv[i]);
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return std::string(arg.substr(9));
  }
  return {};
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void apply_config_file(const std::string& path, const OverrideTable& table) {
  const json cfg = lcqp::load_json(path);
  if (!cfg.is_object())
    throw UsageError("--config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    const auto it = table.find(key);
    if (it == table.end())
      throw UsageError("unknown config key '" + key + "'");
    try {
      for (const auto& apply : it->second) apply(value);
    } catch (const json::exception&) {
      throw UsageError("config key '" + key + "' has the wrong type");
    }
  }
}

void print_result(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  using namespace lcqp;

  CLI::App app{"LCQP toolkit: generate, solve, learn, verify"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON object of flag overrides; explicit flags win");

  OverrideTable overrides;

  // gen
  GenConfig gen_cfg;
  std::string gen_family = "generic", gen_out;
  CLI::App* gen = app.add_subcommand("gen", "Generate an instance dataset");
  gen->add_option("--family", gen_family, "generic | svm | portfolio")
      ->check(CLI::IsMember({"generic", "svm", "portfolio"}));
  gen->add_option("--n", gen_cfg.n, "variables before slack conversion");
  gen->add_option("--m", gen_cfg.m, "constraints");
  gen->add_option("--density-a", gen_cfg.density_a, "keep probability for A entries");
  gen->add_option("--density-q", gen_cfg.density_q, "keep probability for the Q factor");
  gen->add_option("--count", gen_cfg.count, "instances to write");
  gen->add_option("--seed", gen_cfg.seed, "base seed");
  gen->add_option("--svm-lambda", gen_cfg.svm_lambda, "hinge penalty (svm family)");
  gen->add_option("--out", gen_out, "output directory")->required();
  bind_key(overrides, "family", gen_family);
  bind_key(overrides, "n", gen_cfg.n);
  bind_key(overrides, "m", gen_cfg.m);
  bind_key(overrides, "density-a", gen_cfg.density_a);
  bind_key(overrides, "density-q", gen_cfg.density_q);
  bind_key(overrides, "count", gen_cfg.count);
  bind_key(overrides, "seed", gen_cfg.seed);
  bind_key(overrides, "svm-lambda", gen_cfg.svm_lambda);
  bind_key(overrides, "out", gen_out);

  // solve
  std::string solve_instance, solve_inner = "direct";
  IpmConfig ipm_cfg;
  bool emit_trajectory = false;
  CLI::App* solve = app.add_subcommand("solve", "Run the interior-point solver");
  solve->add_option("--instance", solve_instance, "instance JSON file")->required();
  solve->add_option("--inner", solve_inner, "direct | cg")
      ->check(CLI::IsMember({"direct", "cg"}));
  solve->add_option("--sigma", ipm_cfg.sigma, "duality decay factor");
  solve->add_option("--tol", ipm_cfg.tol_kkt, "KKT stopping tolerance");
  solve->add_option("--max-outer", ipm_cfg.max_outer, "outer iteration cap");
  solve->add_flag("--emit-trajectory", emit_trajectory,
                  "write x_star and the iterate trajectory back into the file");
  bind_key(overrides, "instance", solve_instance);
  bind_key(overrides, "inner", solve_inner);
  bind_key(overrides, "sigma", ipm_cfg.sigma);
  bind_key(overrides, "tol", ipm_cfg.tol_kkt);
  bind_key(overrides, "max-outer", ipm_cfg.max_outer);
  bind_key(overrides, "emit-trajectory", emit_trajectory);

  // train
  std::string train_mode = "feas", train_data, train_model_out;
  TrainConfig train_opt;
  SearchConfig train_search;
  int train_layers = 4, train_width = 32;
  CLI::App* train = app.add_subcommand("train", "Train a predictor on a dataset");
  train->add_option("--mode", train_mode, "feas | ipm")
      ->check(CLI::IsMember({"feas", "ipm"}));
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--model-out", train_model_out, "model output file")->required();
  train->add_option("--epochs", train_opt.epochs, "training epochs");
  train->add_option("--lr", train_opt.lr, "Adam learning rate");
  train->add_option("--T", train_search.t_train, "rollout length");
  train->add_option("--seed", train_opt.seed, "init and shuffle seed");
  train->add_option("--batch", train_opt.batch, "minibatch size");
  train->add_option("--layers", train_layers, "message-passing layers");
  train->add_option("--width", train_width, "hidden width");
  train->add_option("--val-fraction", train_opt.val_fraction,
                    "trailing share held out for logging");
  train->add_option("--patience", train_opt.patience,
                    "early-stop patience in epochs (0 = off)");
  train->add_option("--tau0", train_search.tau0, "initial correction scale");
  train->add_option("--eps", train_search.eps_bar, "correction stabiliser");
  bind_key(overrides, "mode", train_mode);
  bind_key(overrides, "data", train_data);
  bind_key(overrides, "model-out", train_model_out);
  bind_key(overrides, "epochs", train_opt.epochs);
  bind_key(overrides, "lr", train_opt.lr);
  bind_key(overrides, "T", train_search.t_train);
  bind_key(overrides, "seed", train_opt.seed);
  bind_key(overrides, "batch", train_opt.batch);
  bind_key(overrides, "layers", train_layers);
  bind_key(overrides, "width", train_width);
  bind_key(overrides, "val-fraction", train_opt.val_fraction);
  bind_key(overrides, "patience", train_opt.patience);
  bind_key(overrides, "tau0", train_search.tau0);
  bind_key(overrides, "eps", train_search.eps_bar);

  // infer
  std::string infer_mode = "feas", infer_model, infer_instance, infer_out;
  SearchConfig infer_search;
  CLI::App* infer = app.add_subcommand("infer", "Apply a trained predictor");
  infer->add_option("--mode", infer_mode, "feas | ipm (must match the model)")
      ->check(CLI::IsMember({"feas", "ipm"}));
  infer->add_option("--model", infer_model, "model JSON file")->required();
  infer->add_option("--instance", infer_instance, "instance JSON file")->required();
  infer->add_option("--T", infer_search.t_infer, "inference iterations");
  infer->add_option("--delta", infer_search.delta, "candidate threshold (ipm mode)");
  infer->add_option("--tau0", infer_search.tau0, "initial correction scale");
  infer->add_option("--eps", infer_search.eps_bar, "correction stabiliser");
  infer->add_option("--out", infer_out, "also write the report here");
  bind_key(overrides, "mode", infer_mode);
  bind_key(overrides, "model", infer_model);
  bind_key(overrides, "instance", infer_instance);
  bind_key(overrides, "T", infer_search.t_infer);
  bind_key(overrides, "delta", infer_search.delta);
  bind_key(overrides, "tau0", infer_search.tau0);
  bind_key(overrides, "eps", infer_search.eps_bar);
  bind_key(overrides, "out", infer_out);

  // eval
  std::string eval_model, eval_data, eval_out;
  SearchConfig eval_search;
  int eval_threads = 0;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a model over a dataset");
  eval->add_option("--model", eval_model, "model JSON file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--T", eval_search.t_infer, "inference iterations");
  eval->add_option("--delta", eval_search.delta, "candidate threshold (ipm mode)");
  eval->add_option("--tau0", eval_search.tau0, "initial correction scale");
  eval->add_option("--eps", eval_search.eps_bar, "correction stabiliser");
  eval->add_option("--threads", eval_threads, "worker cap (0 = LCQP_THREADS/cores)");
  eval->add_option("--out", eval_out, "also write the metrics here");
  bind_key(overrides, "model", eval_model);
  bind_key(overrides, "data", eval_data);
  bind_key(overrides, "T", eval_search.t_infer);
  bind_key(overrides, "delta", eval_search.delta);
  bind_key(overrides, "tau0", eval_search.tau0);
  bind_key(overrides, "eps", eval_search.eps_bar);
  bind_key(overrides, "threads", eval_threads);
  bind_key(overrides, "out", eval_out);

  // verify-sim
  int vs_n = 8, vs_m = 4, vs_trials = 20;
  std::uint64_t vs_seed = 1;
  double vs_tol = 1e-9;
  CLI::App* verify =
      app.add_subcommand("verify-sim", "Diff the message-passing simulation "
                                       "against the solver's inner iterations");
  verify->add_option("--n", vs_n, "variables");
  verify->add_option("--m", vs_m, "constraints");
  verify->add_option("--trials", vs_trials, "random trials");
  verify->add_option("--seed", vs_seed, "base seed");
  verify->add_option("--tol", vs_tol, "deviation tolerance");
  bind_key(overrides, "n", vs_n);
  bind_key(overrides, "m", vs_m);
  bind_key(overrides, "trials", vs_trials);
  bind_key(overrides, "seed", vs_seed);
  bind_key(overrides, "tol", vs_tol);

  try {
    const std::string pre_config = find_config_path(argc, argv);
    if (!pre_config.empty()) apply_config_file(pre_config, overrides);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      gen_cfg.family = family_from_name(gen_family);
      Timer timer;
      std::vector<std::string> files = write_dataset(gen_out, gen_cfg);
      std::vector<std::string> outputs = files;
      outputs.push_back((std::filesystem::path(gen_out) / "manifest.json").string());
      json config = gen_cfg.to_json();
      config["out"] = gen_out;
      write_run_manifest("gen", config, gen_cfg.seed, timer.seconds(), outputs);
      print_result(json{{"instances", files.size()}, {"dir", gen_out}});
      return 0;
    }

    if (*solve) {
      ipm_cfg.inner =
          solve_inner == "cg" ? InnerSolver::cg : InnerSolver::direct;
      ipm_cfg.record_trajectory = emit_trajectory;
      LcqpInstance inst = load_instance(solve_instance);
      Timer timer;
      const IpmResult result = ipm_solve(inst, ipm_cfg);
      SolveReport report;
      report.x = result.x;
      report.objective = result.objective;
      report.iterations = result.iterations;
      report.kkt = result.kkt;
      report.wall_time_sec = result.wall_time_sec;
      json j = report_to_json(report);
      j["converged"] = result.converged;
      j["mu"] = result.mu;
      j["cg_breakdowns"] = result.cg_breakdowns;
      j["cg_fallbacks"] = result.cg_fallbacks;
      print_result(j);

      std::vector<std::string> outputs;
      if (emit_trajectory) {
        inst.x_star = result.x;
        inst.trajectory = result.trajectory;
        save_instance(solve_instance, inst);
        outputs.push_back(solve_instance);
      }
      const json config{{"instance", solve_instance}, {"inner", solve_inner},
                        {"sigma", ipm_cfg.sigma},     {"tol", ipm_cfg.tol_kkt},
                        {"max_outer", ipm_cfg.max_outer},
                        {"emit_trajectory", emit_trajectory}};
      write_run_manifest("solve", config, 0, timer.seconds(), outputs);
      if (!result.converged) {
        std::cerr << "not converged after " << result.iterations
                  << " iterations (kkt " << result.kkt.primal << " / "
                  << result.kkt.dual << " / " << result.kkt.comp << ")\n";
        return 1;
      }
      return 0;
    }

    if (*train) {
      auto data = load_dataset(train_data);
      std::vector<LcqpInstance> instances;
      instances.reserve(data.size());
      for (auto& [name, inst] : data) instances.push_back(std::move(inst));

      MpnnConfig mc;
      mc.mode = mode_from_name(train_mode);
      mc.layers = train_layers;
      mc.width = train_width;
      MpnnModel model = init_model(mc, train_opt.seed);

      Timer timer;
      const TrainReport report =
          mc.mode == Mode::feas
              ? train_feasibility(model, instances, train_search, train_opt,
                                  &std::cerr)
              : train_ipm_guided(model, instances, train_search, train_opt,
                                 &std::cerr);
      save_model(train_model_out, model);

      json config{{"mode", train_mode},
                  {"data", train_data},
                  {"model_out", train_model_out},
                  {"epochs", train_opt.epochs},
                  {"lr", train_opt.lr},
                  {"T", train_search.t_train},
                  {"seed", train_opt.seed},
                  {"batch", train_opt.batch},
                  {"layers", train_layers},
                  {"width", train_width},
                  {"val_fraction", train_opt.val_fraction},
                  {"patience", train_opt.patience},
                  {"tau0", train_search.tau0},
                  {"eps", train_search.eps_bar}};
      write_run_manifest("train", config, train_opt.seed, timer.seconds(),
                         {train_model_out});
      print_result(json{{"model", train_model_out},
                        {"epochs_run", report.epochs_run},
                        {"early_stopped", report.early_stopped},
                        {"final_train_loss", report.final_train_loss}});
      return 0;
    }

    if (*infer) {
      const MpnnModel model = load_model(infer_model);
      if (mode_from_name(infer_mode) != model.cfg.mode)
        throw ValidationError("--mode " + infer_mode +
                              " does not match the model's mode");
      const LcqpInstance inst = load_instance(infer_instance);
      Timer timer;
      InferenceResult res;
      if (model.cfg.mode == Mode::feas) {
        const NullspaceBasis basis = compute_nullspace(inst.a);
        const std::vector<double> x0 = feasible_initial_point(inst);
        res = infer_feasibility(model_predictor(model), inst, basis, x0,
                                infer_search);
      } else {
        res = infer_ipm_guided(model_predictor(model), inst, infer_search);
      }
      json j{{"objective", res.objective},
             {"violation", res.violation},
             {"max_residual", res.max_residual},
             {"has_candidate", res.has_candidate},
             {"iterations", res.iterations},
             {"x", res.x}};
      if (static_cast<int>(inst.x_star.size()) == inst.n) {
        bool absolute = false;
        j["gap_pct"] = relative_gap_pct(
            res.objective, objective_value(inst, inst.x_star), &absolute);
        j["absolute_gap"] = absolute;
      }
      print_result(j);
      std::vector<std::string> outputs;
      if (!infer_out.empty()) {
        save_json(infer_out, j);
        outputs.push_back(infer_out);
      }
      const json config{{"mode", infer_mode},   {"model", infer_model},
                        {"instance", infer_instance},
                        {"T", infer_search.t_infer},
                        {"delta", infer_search.delta},
                        {"tau0", infer_search.tau0},
                        {"eps", infer_search.eps_bar}};
      write_run_manifest("infer", config, 0, timer.seconds(), outputs);
      return 0;
    }

    if (*eval) {
      const MpnnModel model = load_model(eval_model);
      const auto data = load_dataset(eval_data);
      Timer timer;
      const EvalReport report = evaluate(model, data, eval_search, eval_threads);
      const json j = eval_report_to_json(report);
      print_result(j);
      std::vector<std::string> outputs;
      if (!eval_out.empty()) {
        save_json(eval_out, j);
        outputs.push_back(eval_out);
      }
      const json config{{"model", eval_model},   {"data", eval_data},
                        {"T", eval_search.t_infer},
                        {"delta", eval_search.delta},
                        {"tau0", eval_search.tau0},
                        {"eps", eval_search.eps_bar},
                        {"threads", eval_threads}};
      write_run_manifest("eval", config, 0, timer.seconds(), outputs);
      return 0;
    }

    if (*verify) {
      Timer timer;
      const VerifySummary summary =
          verify_sim(vs_n, vs_m, vs_trials, vs_seed, vs_tol, std::cout);
      const json config{{"n", vs_n},       {"m", vs_m},   {"trials", vs_trials},
                        {"seed", vs_seed}, {"tol", vs_tol}};
      write_run_manifest("verify-sim", config, vs_seed, timer.seconds(), {});
      return summary.pass ? 0 : 1;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SolveError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
