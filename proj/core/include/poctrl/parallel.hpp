#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace poctrl {

// Statically partitioned parallel loop over [0, n).  Each index must write
// only to its own output slot; the partition (and hence the thread count)
// never changes what any index computes, so results are identical for every
// value of `threads`.  The first exception thrown by any index is rethrown
// on the calling thread.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    const int lo = int(int64_t(n) * w / workers);
    const int hi = int(int64_t(n) * (w + 1) / workers);
    pool.emplace_back([lo, hi, &body, &first_error, &error_mutex] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace poctrl
