#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace eamamba::detail {

// Runs body(i) for i in [0, n), in parallel when OpenMP is enabled. The
// first exception (lowest index) is rethrown after the loop.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex mutex;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex);
      if (i < error_index) {
        error_index = i;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace eamamba::detail
