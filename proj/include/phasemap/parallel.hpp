#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace phasemap {

// Runs fn(i) for i in [0, n) split into contiguous chunks across workers.
// Each index is processed exactly once, so results written per index do not
// depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(std::max(1u, workers), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace phasemap
