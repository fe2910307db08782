#pragma once

#include <cstddef>
#include <functional>

namespace cdp {

/// Worker count used by per-stage sweeps. Resolution order: explicit
/// set_thread_count, then STOCH_BELLMAN_THREADS, then hardware concurrency.
[[nodiscard]] std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs fn(i) for i in [0, n). The first exception by index is rethrown, so
/// failures are reported deterministically regardless of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cdp
