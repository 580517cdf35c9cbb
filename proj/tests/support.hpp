#pragma once

// Shared fixtures for the test binaries: scratch directories, subprocess
// capture, dense conversions, and independent numeric oracles (eigenvalue
// bounds, finite differences) that the library code never touches.

#include <Eigen/Dense>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcqp/datasets.hpp"
#include "lcqp/ipm.hpp"
#include "lcqp/rng.hpp"
#include "lcqp/types.hpp"

namespace testsupport {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lcqp_test") {
    auto root = std::filesystem::temp_directory_path();
    std::random_device rd;
    path_ = root / (tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

// Runs a shell command and captures stdout plus the exit code.  Callers
// append "2>&1" or "2>/dev/null" when stderr matters.
inline CommandResult run_command(const std::string& cmd) {
  CommandResult result;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return result;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) result.out.append(buf, got);
  const int status = pclose(pipe);
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

inline Eigen::MatrixXd dense(const lcqp::SparseMatrix& m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows, m.cols);
  for (const auto& e : m.entries) out(e.row, e.col) += e.value;
  return out;
}

inline Eigen::VectorXd dense_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Spectral oracle, independent of anything in the library.
inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

inline double linf_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double linf(const std::vector<double>& a) {
  double worst = 0.0;
  for (double v : a) worst = std::max(worst, std::abs(v));
  return worst;
}

inline double l2(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

// Relative agreement with an absolute floor, used by the gradient checks.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Dense random instance with A of full row rank (Gaussian rows are almost
// surely independent) and Q strictly positive definite.  b is either free
// Gaussian or A x0 for a strictly positive x0, so the feasible set is
// guaranteed nonempty in the pinned-b variant.
inline lcqp::LcqpInstance random_instance(int n, int m, std::uint64_t seed,
                                          bool pin_feasible = false) {
  lcqp::Rng rng(seed);
  lcqp::LcqpInstance inst;
  inst.n = n;
  inst.m = m;
  inst.q = lcqp::make_sparse_spd(n, 0.5, rng.next_u64());
  inst.a.rows = m;
  inst.a.cols = n;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) inst.a.add(i, j, rng.normal());
  inst.a.sort_entries();
  inst.c.resize(n);
  for (double& v : inst.c) v = rng.normal();
  if (pin_feasible) {
    std::vector<double> x0(n);
    for (double& v : x0) v = rng.uniform(0.5, 2.0);
    inst.b = inst.a.multiply(x0);
  } else {
    inst.b.resize(m);
    for (double& v : inst.b) v = rng.normal();
  }
  return inst;
}

// Saddle system assembled at a random strictly interior point of a random
// instance, the shape every inner solve in the outer loop sees.
struct InteriorSystem {
  lcqp::LcqpInstance inst;
  std::vector<double> x, s, lambda;
  double sigma_mu = 0.0;
  Eigen::MatrixXd k;
  Eigen::VectorXd rhs;
};

inline InteriorSystem random_interior_system(int n, int m, std::uint64_t seed) {
  InteriorSystem sys;
  sys.inst = random_instance(n, m, seed);
  lcqp::Rng rng(seed ^ 0x5eedULL);
  sys.x.resize(n);
  sys.s.resize(n);
  sys.lambda.resize(m);
  double mu = 0.0;
  for (int j = 0; j < n; ++j) {
    sys.x[j] = rng.uniform(0.5, 2.0);
    sys.s[j] = rng.uniform(0.5, 2.0);
    mu += sys.x[j] * sys.s[j];
  }
  for (double& v : sys.lambda) v = rng.normal();
  sys.sigma_mu = 0.5 * mu / n;
  sys.k = lcqp::assemble_augmented(sys.inst, sys.x, sys.s);
  sys.rhs = lcqp::newton_rhs(sys.inst, sys.x, sys.lambda, sys.sigma_mu);
  return sys;
}

// Drops timing fields so two runs of the same command compare byte-equal.
inline void strip_volatile(nlohmann::json& j) {
  if (j.is_object()) {
    j.erase("wall_time_sec");
    for (auto& [key, value] : j.items()) strip_volatile(value);
  } else if (j.is_array()) {
    for (auto& value : j) strip_volatile(value);
  }
}

}  // namespace testsupport
