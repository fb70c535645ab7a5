#pragma once

#include <cstddef>
#include <functional>

namespace safe {

/// Number of worker threads used by parallel_for. Zero means "all cores".
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the outcome does not depend on
/// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace safe
