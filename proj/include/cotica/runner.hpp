#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cotica {

// Worker cap for fan-out over independent (method, seed) runs. COTICA_THREADS
// overrides hardware concurrency.
inline int worker_limit() {
  if (const char* env = std::getenv("COTICA_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs the jobs on up to worker_limit() threads. Each job owns its full state,
// so results are identical to sequential execution. The first exception is
// rethrown after all workers finish.
inline void run_parallel(const std::vector<std::function<void()>>& jobs) {
  const int workers =
      std::min<int>(worker_limit(), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        try {
          jobs[i]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace cotica
