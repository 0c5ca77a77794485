#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gmdyn {

/// Runs task(i) for i in [0, n_tasks) on up to `workers` threads. Tasks must
/// write only to their own output slot; callers combine slots in index order
/// so results do not depend on the worker count. The first exception thrown
/// by any task is rethrown on the calling thread.
template <typename Task>
void parallel_for(std::size_t n_tasks, std::size_t workers, Task&& task) {
  const std::size_t n_threads = std::min(std::max<std::size_t>(workers, 1), n_tasks);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n_tasks);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gmdyn
