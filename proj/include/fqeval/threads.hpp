#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fqeval {

/// Worker count from FQEVAL_THREADS, default 1.
inline int thread_count() {
  const char* env = std::getenv("FQEVAL_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

/// Runs fn(0..n-1). Each index writes only its own slot, so results are
/// identical for any worker count. The first exception thrown by any index
/// is rethrown after all workers finish.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(thread_count(), n < 1 ? 1 : n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fqeval
