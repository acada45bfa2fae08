#pragma once

#include <cstddef>
#include <functional>

namespace mal {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Work items must write only to their own output slots;
/// the first exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace mal
