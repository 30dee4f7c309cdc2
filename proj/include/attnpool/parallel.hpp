#pragma once

#include <cstddef>

namespace attnpool {

/// Worker cap: ATTNPOOL_THREADS if set and positive, otherwise the OpenMP
/// default. Always 1 in builds without OpenMP.
int max_threads();

/// Overrides the cap for the current process (0 restores the default).
void set_max_threads(int n);

bool in_parallel_region();

}  // namespace attnpool
