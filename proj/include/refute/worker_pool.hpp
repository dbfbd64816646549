#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace refute {

// Runs fn(worker_index, item_index) for every item on at most `workers`
// threads. Items are handed out in order. The first exception escaping fn is
// rethrown after all threads join; remaining items are abandoned.
template <typename Fn>
void parallel_for(std::size_t items, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(items, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < items; ++i) fn(std::size_t{0}, i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      while (!stop.load()) {
        std::size_t i = next.fetch_add(1);
        if (i >= items) break;
        try {
          fn(w, i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace refute
