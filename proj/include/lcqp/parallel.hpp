#pragma once

#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcqp {

// Worker budget for batch loops.  LCQP_THREADS caps it; unset or invalid
// means one worker per logical core.
inline int thread_budget() {
  int budget = static_cast<int>(std::thread::hardware_concurrency());
  if (budget <= 0) budget = 1;
  if (const char* env = std::getenv("LCQP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < budget) budget = cap;
    if (cap >= 1 && cap > budget) budget = cap;
  }
  return budget;
}

// Batch loop over independent work items.  Each item writes only its own
// slot, so the result is identical whatever the thread count; reductions that
// need an ordering are done by the caller after the loop, in index order.
// threads == 0 picks thread_budget(); threads == 1 is the serial reference
// path (also taken when OpenMP is absent).
template <class Fn>
void parallel_for(int count, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = thread_budget();
#ifdef _OPENMP
  if (threads > 1 && count > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
#endif
  for (int i = 0; i < count; ++i) fn(i);
}

}  // namespace lcqp
