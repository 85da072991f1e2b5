#pragma once

#include <cstddef>
#include <functional>

namespace patchace {

/// Worker count: hardware concurrency capped by the PATCH_ACE_THREADS
/// environment variable (read once). Always at least 1.
std::size_t worker_count();

/// Run fn over [0, n) split into contiguous chunks, one per worker. Callers
/// must only write to disjoint, index-owned slots so the output is identical
/// for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& chunk_fn);

} // namespace patchace
