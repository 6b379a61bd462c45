#pragma once

#include <cstddef>
#include <functional>

namespace talforge {

/// Worker cap: TALFORGE_THREADS when set to a positive integer, otherwise the
/// number of available cores (at least 1).
std::size_t worker_count();

/// Calls fn(i) for every i in [0, n) on at most worker_count() threads.
/// Callers write results into per-index slots, so output order never depends
/// on scheduling. Gradient recording is disabled inside workers. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace talforge
