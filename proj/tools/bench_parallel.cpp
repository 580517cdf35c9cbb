// Batch-solve throughput: serial reference pass vs OpenMP workers.  Per-item
// arithmetic is identical either way, so the two passes must agree exactly;
// the benchmark reports throughput and verifies that.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <iostream>
#include <vector>

#include "lcqp/datasets.hpp"
#include "lcqp/ipm.hpp"
#include "lcqp/parallel.hpp"
#include "lcqp/types.hpp"

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double solve_batch(const std::vector<lcqp::LcqpInstance>& instances, int threads,
                   std::vector<double>& objectives) {
  objectives.assign(instances.size(), 0.0);
  const double t0 = now_seconds();
  lcqp::parallel_for(
      static_cast<int>(instances.size()),
      [&](int i) {
        objectives[i] = lcqp::ipm_solve(instances[i]).objective;
      },
      threads);
  return now_seconds() - t0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch IPM throughput, serial vs parallel"};
  int count = 40, n = 12, m = 6;
  std::uint64_t seed = 7;
  int threads = 0;
  app.add_option("--count", count, "instances per pass");
  app.add_option("--n", n, "variables before slack conversion");
  app.add_option("--m", m, "constraints");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--threads", threads, "parallel worker cap (0 = budget)");
  CLI11_PARSE(app, argc, argv);

  lcqp::GenConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.count = count;
  cfg.seed = seed;

  std::vector<lcqp::LcqpInstance> instances;
  instances.reserve(count);
  for (int i = 0; i < count; ++i)
    instances.push_back(lcqp::gen_instance(cfg, i));

  if (threads <= 0) threads = lcqp::thread_budget();

  std::vector<double> serial_obj, parallel_obj;
  const double serial_sec = solve_batch(instances, 1, serial_obj);
  const double parallel_sec = solve_batch(instances, threads, parallel_obj);

  double worst = 0.0;
  for (int i = 0; i < count; ++i)
    worst = std::max(worst, std::abs(serial_obj[i] - parallel_obj[i]));

  std::cout << "instances        " << count << "  (n=" << n << ", m=" << m
            << ")\n"
            << "serial           " << serial_sec << " s  ("
            << count / serial_sec << " inst/s)\n"
            << "parallel (" << threads << ")     " << parallel_sec << " s  ("
            << count / parallel_sec << " inst/s)\n"
            << "speedup          " << serial_sec / parallel_sec << "x\n"
            << "max |obj diff|   " << worst << "\n";
  return worst == 0.0 ? 0 : 1;
}
