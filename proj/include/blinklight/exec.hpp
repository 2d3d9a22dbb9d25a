#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace blinklight {

/// Worker-count cap shared by every parallel stage.
struct ExecOptions {
  std::size_t threads = 1;
};

/// Runs `task(i)` for i in [0, count) on up to `threads` workers, in waves of
/// `threads` tasks. After each wave, `reduce(i)` is called on the calling
/// thread for the wave's tasks in increasing index order, so any reduction
/// performed there sees the same order for every thread count.
template <class Task, class Reduce>
void run_waves(std::size_t count, std::size_t threads, Task&& task, Reduce&& reduce) {
  threads = std::max<std::size_t>(1, threads);
  for (std::size_t start = 0; start < count; start += threads) {
    const std::size_t end = std::min(count, start + threads);
    if (end - start == 1) {
      task(start, 0);
    } else {
      std::vector<std::exception_ptr> errors(end - start);
      {
        std::vector<std::jthread> workers;
        workers.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
          workers.emplace_back([&, i] {
            try {
              task(i, i - start);
            } catch (...) {
              errors[i - start] = std::current_exception();
            }
          });
        }
      }
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (std::size_t i = start; i < end; ++i) reduce(i, i - start);
  }
}

}  // namespace blinklight
