#pragma once

#include <cstddef>
#include <functional>

namespace csvqa {

// Internal parallelism cap: CSVQ_THREADS env var, default 1 so every default
// run is deterministic end to end. Values < 1 fall back to 1.
int max_threads();

// Runs fn(i) for i in [0, n). With max_threads() == 1 this is a plain loop;
// otherwise indices are distributed over worker threads. Callers must only
// write to disjoint, index-addressed slots so the result is schedule
// independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace csvqa
