#pragma once

#include <cstddef>
#include <functional>

namespace motionsurv {

/// Run body(i) for i in [0, count) on at most `jobs` threads.
///
/// Work items are claimed dynamically; callers must write results into
/// per-index slots so the outcome is independent of scheduling. The first
/// exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace motionsurv
