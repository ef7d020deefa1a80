#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace inconvad {

// Runs fn(begin, end, worker) over `threads` contiguous chunks of [0, n).
// Chunk boundaries depend only on n and threads, so per-worker partial
// results can be reduced in a fixed order. The first exception is rethrown.
inline void parallel_chunks(std::size_t n, std::size_t threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    if (n > 0) fn(0, n, 0);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  auto chunk = [&](std::size_t w) {
    const std::size_t begin = n * w / threads;
    const std::size_t end = n * (w + 1) / threads;
    try {
      fn(begin, end, w);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < threads; ++w) pool.emplace_back(chunk, w);
  chunk(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace inconvad
