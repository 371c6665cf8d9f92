#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rarc {

// Runs fn(i) for i in 0..n-1 on up to max_threads workers. Work is handed out
// by an atomic counter, so which worker runs which index is arbitrary; callers
// must write results into per-index slots. The first exception is rethrown
// after all workers finish.
template <typename Fn>
void parallel_for(int n, int max_threads, Fn&& fn) {
  if (n <= 0) return;
  if (max_threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  int n_threads = std::min(max_threads, n);
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rarc
