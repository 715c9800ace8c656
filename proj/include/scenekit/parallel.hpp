#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace scenekit {

// Worker count used by the data-parallel loops below; 0 means one per core.
void set_num_threads(unsigned n);
unsigned num_threads();

// Runs fn(i) for i in [begin, end) over contiguous chunks. fn must only write
// to state owned by index i, which keeps results independent of thread count.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
  const std::size_t count = end > begin ? end - begin : 0;
  const std::size_t workers = std::min<std::size_t>(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace scenekit
