#include "attnpool/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef ATTNPOOL_HAVE_OPENMP
#include <omp.h>
#endif

namespace attnpool {

namespace {
std::atomic<int> g_override{0};

int env_threads() {
  const char* v = std::getenv("ATTNPOOL_THREADS");
  if (v == nullptr) return 0;
  try {
    const int n = std::stoi(v);
    return n > 0 ? n : 0;
  } catch (...) {
    return 0;
  }
}
}  // namespace

int max_threads() {
#ifdef ATTNPOOL_HAVE_OPENMP
  if (const int o = g_override.load(); o > 0) return o;
  static const int from_env = env_threads();
  const int hw = omp_get_max_threads();
  return from_env > 0 && from_env < hw ? from_env : hw;
#else
  return 1;
#endif
}

void set_max_threads(int n) { g_override.store(n > 0 ? n : 0); }

bool in_parallel_region() {
#ifdef ATTNPOOL_HAVE_OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

}  // namespace attnpool
