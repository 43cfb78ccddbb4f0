#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace blockpf {

// Worker count used by parallel_for. Defaults to $BLOCKPF_THREADS, else the
// hardware concurrency; set_thread_count overrides both.
inline std::size_t& thread_count_override() {
  static std::size_t value = 0;
  return value;
}

inline std::size_t thread_count() {
  if (thread_count_override() > 0) return thread_count_override();
  if (const char* env = std::getenv("BLOCKPF_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed > 0) return static_cast<std::size_t>(parsed);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline void set_thread_count(std::size_t n) { thread_count_override() = n; }

// Calls fn(i) for i in [0, count). Work is handed out dynamically; callers
// write results into per-index slots so the outcome is order independent.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace blockpf
