#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ssanova {

/// Worker count: SSANOVA_THREADS if set to a positive integer, else the
/// number of hardware threads.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("SSANOVA_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {
inline thread_local bool in_worker = false;
}

/// Runs body(i) for i in [0, count). Every task runs to completion; the
/// first exception (by index) is rethrown afterwards. Nested calls from a
/// worker run serially.
template <class Body>
void parallel_for(std::size_t count, Body&& body, unsigned threads = thread_cap()) {
  std::vector<std::exception_ptr> errors(count);
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, count));
  if (workers <= 1 || detail::in_worker) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        detail::in_worker = true;
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ssanova
