#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace softact {

// Fixed-size chunking so per-chunk partial results can be merged in chunk
// order, giving bitwise-identical reductions for any worker count.
inline constexpr int kChunkSize = 64;

inline int num_chunks(int n) { return n <= 0 ? 0 : (n + kChunkSize - 1) / kChunkSize; }

// Runs fn(chunk, begin, end) for every chunk. fn must write only into
// storage owned by its chunk index.
inline void for_each_chunk(int n, int workers,
                           const std::function<void(int, int, int)>& fn) {
  const int chunks = num_chunks(n);
  if (chunks == 0) return;
  auto run = [&](int c) {
    const int begin = c * kChunkSize;
    const int end = std::min(n, begin + kChunkSize);
    fn(c, begin, end);
  };
  if (workers <= 1 || chunks == 1) {
    for (int c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::atomic<int> next{0};
  const int nthreads = std::min(workers, chunks);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) run(c);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace softact
