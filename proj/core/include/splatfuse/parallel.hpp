#pragma once

#include <cstddef>
#include <functional>

namespace splatfuse {

// Worker count used by parallel_for. Defaults to hardware concurrency,
// overridable with the SPLATFUSE_THREADS environment variable.
int thread_count();

// Runs fn(begin, end) over a static partition of [0, n). The partition is a
// fixed function of n only, so per-chunk results can be merged in chunk order
// to keep reductions independent of the worker count.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& fn);

// Number of chunks parallel_chunks will use for a given n.
std::size_t chunk_count(std::size_t n);

// Convenience: fn(i) for each i in [0, n), no reduction.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace splatfuse
