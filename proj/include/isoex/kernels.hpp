#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>

namespace isoex::kernels {

// Every batch kernel (feature pass 2, tree fitting, scoring, attribution)
// runs either as an OpenMP loop or as the plain serial reference loop. Each
// iteration writes only its own output slot, so both modes are bit-identical.
enum class Execution { kSerial, kParallel };

int max_threads();
void set_threads(int n);

// Calls fn(i) for i in [0, n). Exceptions thrown inside the parallel region
// are captured and the first one is rethrown on the calling thread.
template <typename Fn>
void for_each_index(std::size_t n, Execution exec, Fn&& fn) {
  if (exec == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace isoex::kernels
