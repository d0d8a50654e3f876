#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace trgame::par {

/// Whether data-parallel kernels use OpenMP. All kernels are written so that
/// serial and parallel execution produce bit-identical results (per-index
/// substreams, reductions done in index order after the parallel region).
bool enabled();
void set_enabled(bool on);

int max_threads();

/// RAII guard that forces serial execution within a scope. Used by tests and
/// the benchmark to compare against the serial reference.
class SerialGuard {
 public:
  SerialGuard() : was_(enabled()) { set_enabled(false); }
  ~SerialGuard() { set_enabled(was_); }
  SerialGuard(const SerialGuard&) = delete;
  SerialGuard& operator=(const SerialGuard&) = delete;

 private:
  bool was_;
};

/// Run f(i) for i in [0, n). Parallel when enabled; f must only write to
/// per-index slots.
template <class F>
void for_each_index(std::ptrdiff_t n, F&& f) {
#ifdef _OPENMP
  if (enabled() && n > 1) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
}

}  // namespace trgame::par
