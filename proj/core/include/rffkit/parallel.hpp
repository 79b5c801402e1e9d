#pragma once

#include <cstddef>
#include <functional>

namespace rffkit {

// Worker cap: min(hardware_concurrency, RFFKIT_THREADS when set).
std::size_t worker_count();

// Runs fn(begin, end) over a partition of [0, n). Each index is processed by
// exactly one worker in ascending order within its range, so any computation
// whose writes are disjoint per index is deterministic regardless of the
// worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace rffkit
