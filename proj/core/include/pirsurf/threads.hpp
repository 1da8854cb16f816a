#pragma once

#include <cstdint>
#include <functional>

namespace pirsurf {

// Worker count: PIRSURF_THREADS if set, else hardware concurrency.
int thread_count();

// Runs fn(begin, end, worker) over a static partition of [0, n) on a
// persistent pool. Partitioning depends only on n and the worker count, so
// per-worker accumulation buffers merged in worker order give bit-identical
// results run to run.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t, int)>& fn);

}  // namespace pirsurf
