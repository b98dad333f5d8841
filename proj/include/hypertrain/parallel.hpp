#pragma once

#include <cstddef>
#include <functional>

namespace hypertrain {

/// Worker count: `requested` if nonzero, else the hardware concurrency; both
/// capped by the HYPERTRAIN_THREADS environment variable when it is set.
std::size_t worker_threads(std::size_t requested = 0);

/// Runs fn(0) ... fn(n-1) on up to `threads` threads. Results must be written
/// by index so the outcome does not depend on scheduling. The first exception
/// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

} // namespace hypertrain
