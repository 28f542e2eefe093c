#pragma once

#include <cstdint>
#include <functional>

namespace prism {

// Maximum worker count: PRISM_THREADS env var if set, else hardware
// concurrency. Always >= 1.
int max_threads();

// Runs fn(i) for i in [0, n) across up to max_threads() workers using static
// contiguous chunks. Outputs produced per index must be independent; callers
// that reduce across indices do so afterwards in index order, which keeps
// results bitwise identical at any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace prism
