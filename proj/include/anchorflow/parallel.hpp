#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace anchorflow {

/// Runs fn(begin, end) over a static contiguous partition of [0, n). Work
/// items must write disjoint outputs; results then do not depend on the
/// thread count.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, int threads, Fn&& fn) {
  const std::ptrdiff_t workers =
      std::clamp<std::ptrdiff_t>(threads, 1, std::max<std::ptrdiff_t>(n, 1));
  if (workers == 1) {
    fn(std::ptrdiff_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t b = w * chunk;
    const std::ptrdiff_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace anchorflow
