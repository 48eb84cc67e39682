#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace synthima {

/// Worker count for internal loops: hardware concurrency, capped by the
/// SYNTHIMA_THREADS environment variable when it holds a positive integer.
inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SYNTHIMA_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

/// Runs body(i) for i in [0, count). Each index is handled by exactly one
/// worker, so results are identical to the sequential loop as long as
/// body(i) only writes state owned by index i.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (std::size_t i = 0; i < std::min(count, chunk); ++i) body(i);
  for (auto& t : pool) t.join();
}

}  // namespace synthima
