#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace grade {

// Worker count from GRADE_THREADS (default 1).
inline std::size_t thread_budget() {
  const char* env = std::getenv("GRADE_THREADS");
  if (env == nullptr) return 1;
  try {
    const long v = std::stol(env);
    return v > 1 ? static_cast<std::size_t>(v) : 1;
  } catch (...) {
    return 1;
  }
}

// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker,
// so per-row results do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_per_thread = 1024) {
  const std::size_t workers = std::min(thread_budget(), n / min_per_thread);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace grade
