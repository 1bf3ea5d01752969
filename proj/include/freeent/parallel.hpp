#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace freeent {

/// Thread count used when a caller passes 0: FREEENT_THREADS if set,
/// otherwise the hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("FREEENT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
/// must not share mutable state; results should be written to per-index
/// slots so the outcome does not depend on scheduling. The first exception
/// thrown by any item is rethrown after all workers join.
inline void parallel_for(long count, int threads, const std::function<void(long)>& body) {
  if (threads <= 0) threads = default_threads();
  if (count <= 0) return;
  if (threads == 1 || count == 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  const int w = static_cast<int>(std::min<long>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace freeent
