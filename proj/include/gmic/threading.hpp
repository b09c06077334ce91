#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "gmic/common.hpp"

namespace gmic {

// Global worker cap for parallel_for. 0 = hardware concurrency.
inline std::atomic<int>& max_threads_slot() {
  static std::atomic<int> n{0};
  return n;
}

inline void set_max_threads(int n) { max_threads_slot().store(n); }

inline int max_threads() {
  int n = max_threads_slot().load();
  if (n <= 0) n = int(std::thread::hardware_concurrency());
  return std::max(1, n);
}

// Static contiguous partition of [0, n). Every index is processed by exactly
// one worker and workers write disjoint outputs, so results are identical for
// any thread count. Reductions must be handled by the caller (e.g. per-index
// buffers combined in index order).
template <typename Fn>
void parallel_for(i64 n, Fn&& fn) {
  if (n <= 0) return;
  int workers = int(std::min<i64>(max_threads(), n));
  if (workers <= 1) {
    for (i64 i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  i64 chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    i64 lo = i64(w) * chunk;
    i64 hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (i64 i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gmic
