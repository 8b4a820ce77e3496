#include "splatfuse/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace splatfuse {

namespace {
constexpr std::size_t kChunkSize = 64;  // rows / items per chunk
}

int thread_count() {
  if (const char* env = std::getenv("SPLATFUSE_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::size_t chunk_count(std::size_t n) { return (n + kChunkSize - 1) / kChunkSize; }

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t chunks = chunk_count(n);
  const int workers = std::min<std::size_t>(thread_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c)
      fn(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = static_cast<std::size_t>(w); c < chunks; c += workers)
        fn(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
    });
  }
  for (auto& t : pool) t.join();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace splatfuse
