#include "biref/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace biref {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads_from_env() {
  const char* env = std::getenv("BIREF_THREADS");
  if (env == nullptr) return;
  try {
    int n = std::stoi(env);
    if (n > 0) set_threads(n);
  } catch (const std::exception&) {
    // ignore malformed values, keep the runtime default
  }
}

}  // namespace biref
