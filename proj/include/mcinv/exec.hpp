#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcinv {

// Execution policy for the data-parallel kernels (independent row LPs,
// ensemble shards). Serial is the reference path kept for testing; Parallel
// uses OpenMP when available and degrades to the serial path otherwise.
// Both policies produce identical results.
enum class Exec { Serial, Parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace detail {

template <typename F>
void parallel_for(int n, Exec exec, F&& body) {
#ifdef _OPENMP
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
#else
  (void)exec;
#endif
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace detail

}  // namespace mcinv
