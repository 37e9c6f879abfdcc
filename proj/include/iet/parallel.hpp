#pragma once

#include <cstdint>
#include <functional>

namespace iet {

// Number of worker threads used by parallel_for. 0 or 1 means sequential.
// Initialized from the IEA_THREADS environment variable on first use
// (unset -> hardware concurrency, capped at 8).
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n). Iterations are distributed as contiguous
// chunks over the pool. Callers must guarantee iterations write disjoint
// state; under that contract the result is identical for every thread
// count, including sequential mode.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

// Chunked variant: fn(begin, end) on contiguous ranges. Lower overhead for
// tight inner loops.
void parallel_for_ranges(int64_t n,
                         const std::function<void(int64_t, int64_t)>& fn);

}  // namespace iet
