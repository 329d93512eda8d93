#pragma once

#include <cstddef>
#include <functional>

namespace securecast {

/// Worker count: `requested` if non-zero, else hardware concurrency; capped by
/// SECURECAST_THREADS when that is set to a positive integer.
unsigned worker_count(unsigned requested = 0);

/// Calls fn(i) for every i in [0, count) on up to `threads` workers. The first
/// exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace securecast
