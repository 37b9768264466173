// SPDX-License-Identifier: Apache-2.0

#ifndef RHYTHMKIT_PARALLEL_HPP_
#define RHYTHMKIT_PARALLEL_HPP_

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rhythmkit {

/// Run fn(i) for i in [0, n) on up to `jobs` threads. Each index writes only
/// its own output slot, so results are independent of the thread count.
/// The first exception thrown by any worker is rethrown on the caller.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const int workers = std::min(jobs, n);
  threads.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rhythmkit

#endif  // RHYTHMKIT_PARALLEL_HPP_
