#pragma once

#include <cstdint>
#include <functional>

// Thread helpers. Worker count defaults to the hardware concurrency and is
// capped by the PPSEG_THREADS environment variable. Parallel loops are only
// used where iterations write disjoint outputs, so results do not depend on
// the thread count.

namespace ppseg {

int thread_budget();
void set_thread_budget(int n); // n < 1 resets to the default

// Runs fn(begin, end) over chunks of [0, n). Falls back to a direct call when
// n is small or the budget is 1.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn,
                  int64_t grain = 1024);

} // namespace ppseg
