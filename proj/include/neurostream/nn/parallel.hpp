#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace neurostream::nn {

// Worker cap: NEUROSTREAM_THREADS if set, else hardware concurrency (max 8).
inline unsigned max_threads() {
  static unsigned n = [] {
    if (const char* env = std::getenv("NEUROSTREAM_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : std::min(hw, 8u);
  }();
  return n;
}

// Splits [0, n) into fixed contiguous blocks, one per worker. Callers must
// write disjoint outputs per block; the partition is deterministic.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(max_threads(), n);
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : threads) th.join();
}

}  // namespace neurostream::nn
