#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mvsde {

// Fixed chunk width for parallel path sweeps. Chunk boundaries never depend
// on the worker count, so per-chunk partial results can be merged in chunk
// order and any thread count yields bit-identical reductions.
inline constexpr std::int64_t kChunkSize = 4096;

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

inline int chunk_count(std::int64_t n, std::int64_t chunk = kChunkSize) {
  return n <= 0 ? 0 : int((n + chunk - 1) / chunk);
}

// Runs body(chunk_idx, begin, end) over [0, n) split into fixed chunks.
// Threads pull chunk indices from a shared counter; the body must only write
// to per-chunk storage (or disjoint per-path slots).
inline void parallel_chunks(std::int64_t n, int threads,
                            const std::function<void(int, std::int64_t, std::int64_t)>& body,
                            std::int64_t chunk = kChunkSize) {
  const int nc = chunk_count(n, chunk);
  if (nc == 0) return;
  const int workers = std::min(effective_threads(threads), nc);
  if (workers <= 1) {
    for (int c = 0; c < nc; ++c) {
      const std::int64_t b = std::int64_t(c) * chunk;
      body(c, b, std::min(n, b + chunk));
    }
    return;
  }

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto run = [&] {
    for (;;) {
      const int c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= nc || failed.load(std::memory_order_relaxed)) return;
      try {
        const std::int64_t b = std::int64_t(c) * chunk;
        body(c, b, std::min(n, b + chunk));
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers - 1));
  for (int i = 0; i < workers - 1; ++i) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mvsde
