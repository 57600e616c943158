#ifndef FLOQSENSE_PARALLEL_HPP
#define FLOQSENSE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace floqsense {

inline int default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Work is claimed
/// through a shared counter; callers write results into slot i so output
/// order never depends on scheduling. Returns one exception_ptr per task
/// (null on success).
template <class Body>
std::vector<std::exception_ptr> parallel_for(std::size_t n, int jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || n < 2) {
    worker();
    return errors;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  pool.clear();
  return errors;
}

/// parallel_for that rethrows the lowest-index failure.
template <class Body>
void parallel_for_strict(std::size_t n, int jobs, Body&& body) {
  for (auto& e : parallel_for(n, jobs, std::forward<Body>(body))) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace floqsense

#endif
