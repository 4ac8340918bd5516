#pragma once

#include <cstddef>
#include <functional>

namespace lrvb {

/// Worker count for derivative passes: $LRVB_NUM_THREADS, else 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, count). Iterations must write disjoint outputs.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace lrvb
