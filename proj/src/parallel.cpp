#include "sketchgen/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sketchgen::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return parallel_enabled() ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

} // namespace sketchgen::kernels
