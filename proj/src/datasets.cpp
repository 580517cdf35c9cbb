#include "lcqp/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "lcqp/json_io.hpp"
#include "lcqp/nullspace.hpp"
#include "lcqp/rng.hpp"

namespace lcqp {

const char* family_name(Family f) {
  switch (f) {
    case Family::generic: return "generic";
    case Family::svm: return "svm";
    case Family::portfolio: return "portfolio";
  }
  return "generic";
}

Family family_from_name(const std::string& name) {
  if (name == "generic") return Family::generic;
  if (name == "svm") return Family::svm;
  if (name == "portfolio") return Family::portfolio;
  throw ValidationError("unknown family '" + name + "'");
}

nlohmann::json GenConfig::to_json() const {
  return {{"family", family_name(family)}, {"n", n},
          {"m", m},                        {"density_a", density_a},
          {"density_q", density_q},        {"count", count},
          {"seed", seed},                  {"svm_lambda", svm_lambda}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig cfg;
  if (j.contains("family")) cfg.family = family_from_name(j.at("family").get<std::string>());
  if (j.contains("n")) cfg.n = j.at("n").get<int>();
  if (j.contains("m")) cfg.m = j.at("m").get<int>();
  if (j.contains("density_a")) cfg.density_a = j.at("density_a").get<double>();
  if (j.contains("density_q")) cfg.density_q = j.at("density_q").get<double>();
  if (j.contains("count")) cfg.count = j.at("count").get<int>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("svm_lambda")) cfg.svm_lambda = j.at("svm_lambda").get<double>();
  return cfg;
}

SparseMatrix make_sparse_spd(int n, double density, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("make_sparse_spd: n must be positive");
  if (density < 0.0 || density > 1.0)
    throw ValidationError("make_sparse_spd: density outside [0, 1]");

  Rng rng(seed);
  std::vector<double> factor(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    factor[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int j = 0; j < i; ++j)
      if (rng.uniform() < density)
        factor[static_cast<std::size_t>(i) * n + j] = rng.normal();
  }

  SparseMatrix out;
  out.rows = out.cols = n;
  out.symmetric = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double v = 0.0;
      const int k_hi = std::min(i, j);
      for (int k = 0; k <= k_hi; ++k)
        v += factor[static_cast<std::size_t>(i) * n + k] *
             factor[static_cast<std::size_t>(j) * n + k];
      if (i == j) v += 1e-3;
      if (v != 0.0) out.add(i, j, v);
    }
  }
  out.sort_entries();
  return out;
}

namespace {

constexpr int kMaxRowRedraws = 100;

LcqpInstance build_generic(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.n < 1 || cfg.m < 1)
    throw ValidationError("generic family needs n >= 1 and m >= 1");
  if (cfg.density_a <= 0.0 || cfg.density_a > 1.0)
    throw ValidationError("density_a outside (0, 1]");

  Rng rng(seed);
  const std::uint64_t q_seed = rng.next_u64();

  SparseMatrix a;
  a.rows = cfg.m;
  a.cols = cfg.n;
  for (int i = 0; i < cfg.m; ++i) {
    int redraws = 0;
    for (;;) {
      std::vector<std::pair<int, double>> row;
      for (int j = 0; j < cfg.n; ++j)
        if (rng.uniform() < cfg.density_a) row.emplace_back(j, rng.normal());
      if (!row.empty()) {
        for (const auto& [j, v] : row) a.add(i, j, v);
        break;
      }
      if (++redraws > kMaxRowRedraws)
        throw SolveError(SolveError::Code::not_converged,
                         "generic generator: row stayed empty after redraws");
    }
  }

  std::vector<double> b(cfg.m), c(cfg.n);
  for (double& v : b) v = rng.normal();
  for (double& v : c) v = rng.normal();

  const SparseMatrix q = make_sparse_spd(cfg.n, cfg.density_q, q_seed);
  const std::vector<RowSense> senses(cfg.m, RowSense::le);
  return to_equality_form(q, a, b, c, senses);
}

LcqpInstance build_svm(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.n < 1) throw ValidationError("svm family needs n >= 1");
  if (cfg.m < 2 || cfg.m % 2 != 0)
    throw ValidationError("svm family needs an even m >= 2");
  const double tau = cfg.density_a;
  if (tau <= 0.0 || tau > 1.0) throw ValidationError("density_a outside (0, 1]");

  const int n = cfg.n;
  const int m = cfg.m;
  const double mean = 1.0 / (n * tau);
  const double sdev = std::sqrt(1.0 / (n * tau));

  Rng rng(seed);
  // Two point clouds; the first m/2 rows carry label +1, the rest -1.
  std::vector<double> points(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double sign = (i < m / 2) ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j)
      if (rng.uniform() < tau)
        points[static_cast<std::size_t>(i) * n + j] = sign * mean + sdev * rng.normal();
  }

  // Columns: w+ (n) | w- (n) | xi (m) | surplus (m).  Row i encodes
  //   y_i X_i (w+ - w-) + xi_i - surplus_i = 1.
  LcqpInstance inst;
  inst.n = 2 * n + 2 * m;
  inst.m = m;
  inst.b.assign(m, 1.0);
  inst.c.assign(static_cast<std::size_t>(inst.n), 0.0);
  for (int i = 0; i < m; ++i) inst.c[2 * n + i] = cfg.svm_lambda;

  inst.a.rows = m;
  inst.a.cols = inst.n;
  for (int i = 0; i < m; ++i) {
    const double y = (i < m / 2) ? 1.0 : -1.0;
    for (int j = 0; j < n; ++j) {
      const double v = points[static_cast<std::size_t>(i) * n + j];
      if (v == 0.0) continue;
      inst.a.add(i, j, y * v);
      inst.a.add(i, n + j, -y * v);
    }
    inst.a.add(i, 2 * n + i, 1.0);
    inst.a.add(i, 2 * n + m + i, -1.0);
  }
  inst.a.sort_entries();

  // w'w written on the split variables: diagonal 2 on both w blocks, so the
  // halved quadratic form reproduces the squared norm once the split is
  // complementary (which any optimum is).
  inst.q.rows = inst.q.cols = inst.n;
  inst.q.symmetric = true;
  for (int j = 0; j < 2 * n; ++j) inst.q.add(j, j, 2.0);
  inst.q.sort_entries();
  return inst;
}

LcqpInstance build_portfolio(const GenConfig& cfg, std::uint64_t seed) {
  if (cfg.n < 2) throw ValidationError("portfolio family needs n >= 2");

  Rng rng(seed);
  const std::uint64_t q_seed = rng.next_u64();

  // Return target must lie strictly between the extreme asset returns or the
  // budget simplex cannot meet it; redraw both together until it does.
  std::vector<double> mu(static_cast<std::size_t>(cfg.n));
  double target = 0.0;
  int redraws = 0;
  for (;;) {
    for (double& v : mu) v = rng.normal();
    target = rng.uniform();
    const auto [lo, hi] = std::minmax_element(mu.begin(), mu.end());
    if (*lo + 1e-6 < target && target < *hi - 1e-6) break;
    if (++redraws > kMaxRowRedraws)
      throw SolveError(SolveError::Code::not_converged,
                       "portfolio generator: no attainable return target");
  }

  LcqpInstance inst;
  inst.n = cfg.n;
  inst.m = 2;
  inst.b = {target, 1.0};
  inst.c.assign(static_cast<std::size_t>(cfg.n), 0.0);

  inst.a.rows = 2;
  inst.a.cols = cfg.n;
  for (int j = 0; j < cfg.n; ++j) {
    inst.a.add(0, j, mu[j]);
    inst.a.add(1, j, 1.0);
  }
  inst.a.sort_entries();

  // x' Sigma x doubled into the halved standard form.
  inst.q = make_sparse_spd(cfg.n, cfg.density_q, q_seed);
  for (SparseEntry& e : inst.q.entries) e.value *= 2.0;
  return inst;
}

LcqpInstance build_once(const GenConfig& cfg, std::uint64_t seed) {
  switch (cfg.family) {
    case Family::generic: return build_generic(cfg, seed);
    case Family::svm: return build_svm(cfg, seed);
    case Family::portfolio: return build_portfolio(cfg, seed);
  }
  throw ValidationError("unknown family");
}

}  // namespace

LcqpInstance gen_instance(const GenConfig& cfg, int index) {
  const std::uint64_t base = cfg.seed + static_cast<std::uint64_t>(index);
  // Deterministic retry ladder: stream shifts by a fixed odd stride, so a
  // failed draw never collides with a neighbouring index.
  for (int attempt = 0; attempt <= 100; ++attempt) {
    const std::uint64_t seed = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt);
    LcqpInstance inst = build_once(cfg, seed);
    validate(inst);
    try {
      compute_nullspace(inst.a);     // full row rank or throws
      feasible_initial_point(inst);  // solvable constraints or throws
    } catch (const SolveError&) {
      continue;
    }
    return inst;
  }
  throw SolveError(SolveError::Code::not_converged,
                   "instance generation kept failing the rank or feasibility checks");
}

std::vector<std::string> write_dataset(const std::string& dir, const GenConfig& cfg,
                                       const nlohmann::json& extra) {
  if (cfg.count < 1) throw ValidationError("count must be >= 1");
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["config"] = cfg.to_json();
  manifest["instances"] = nlohmann::json::array();

  std::vector<std::string> paths;
  for (int k = 0; k < cfg.count; ++k) {
    const LcqpInstance inst = gen_instance(cfg, k);
    char name[32];
    std::snprintf(name, sizeof(name), "instance_%04d.json", k);
    const std::string path = (std::filesystem::path(dir) / name).string();
    save_instance(path, inst);
    paths.push_back(path);
    manifest["instances"].push_back(
        {{"file", name}, {"seed", cfg.seed + static_cast<std::uint64_t>(k)}});
  }
  if (extra.is_object())
    for (const auto& [key, value] : extra.items()) manifest[key] = value;
  save_json((std::filesystem::path(dir) / "manifest.json").string(), manifest);
  return paths;
}

std::vector<std::pair<std::string, LcqpInstance>> load_dataset(const std::string& dir) {
  std::vector<std::string> names;
  const std::filesystem::path root(dir);
  const std::filesystem::path manifest_path = root / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    const nlohmann::json manifest = load_json(manifest_path.string());
    for (const auto& item : manifest.at("instances"))
      names.push_back(item.at("file").get<std::string>());
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("instance_", 0) == 0 && entry.path().extension() == ".json")
        names.push_back(name);
    }
    std::sort(names.begin(), names.end());
  }
  if (names.empty())
    throw SolveError(SolveError::Code::io, "no instances found in " + dir);

  std::vector<std::pair<std::string, LcqpInstance>> out;
  out.reserve(names.size());
  for (const std::string& name : names)
    out.emplace_back(name, load_instance((root / name).string()));
  return out;
}

}  // namespace lcqp
