#pragma once

#include <cstddef>
#include <functional>

namespace morphogen {

// Worker cap: MORPHOGEN_THREADS if set to a positive integer, otherwise the
// number of hardware threads.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Work is split into contiguous blocks; callers
// that reduce must write into per-index slots and combine in index order so
// results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace morphogen
