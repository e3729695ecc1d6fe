#pragma once

#include <cstddef>
#include <functional>

namespace tsgs {

/// Process-wide worker count used by parallel_for. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n) with items claimed dynamically by workers. Callers
/// write only to slot i so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tsgs
