#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace istd {

// Global worker cap for the few hot loops that parallelize. Default 1.
int thread_count();
void set_thread_count(int n);

// Runs f(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker; every index is handled by exactly one worker, so each output
// element sees the same arithmetic as the sequential loop and results are
// bitwise identical for any thread count.
template <typename F>
void parallel_for(int64_t n, F&& f) {
  int workers = thread_count();
  if (workers <= 1 || n < 2) {
    for (int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  if (workers > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  int64_t chunk = (n + workers - 1) / workers;
  for (int t = 1; t < workers; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&f, lo, hi] {
      for (int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (int64_t i = 0; i < std::min<int64_t>(chunk, n); ++i) f(i);
  for (auto& th : pool) th.join();
}

}  // namespace istd
