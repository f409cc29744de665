#pragma once

#include <cstddef>
#include <functional>

namespace covshare {

/// Worker count: `requested` if positive, else hardware concurrency, capped
/// by the COVSHARE_THREADS environment variable when set.
int worker_count(int requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Jobs are claimed
/// dynamically; the first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace covshare
