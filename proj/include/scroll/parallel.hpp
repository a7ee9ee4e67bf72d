#pragma once

#include <cstddef>
#include <functional>

namespace scroll {

/// Worker count: SCROLLFIT_THREADS if set, otherwise all hardware threads.
std::size_t thread_count();

/// Runs task(i) for i in [0, n). Tasks must write disjoint outputs; callers that reduce
/// do so afterwards in index order, so results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &task);

} // namespace scroll
