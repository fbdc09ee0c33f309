#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace csns {

inline unsigned& worker_count_setting() {
  static unsigned n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Upper bound on threads used by particle loops (defaults to the hardware count).
inline void set_worker_count(unsigned n) { worker_count_setting() = std::max(1u, n); }
inline unsigned worker_count() { return worker_count_setting(); }

/// Fixed partition of [0, n) into chunks of `chunk` items. The partition does
/// not depend on the thread count, which is what makes chunked reductions
/// reproducible across machines.
struct ChunkPlan {
  std::size_t n;
  std::size_t chunk;
  std::size_t count() const { return n == 0 ? 0 : (n + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(n, (c + 1) * chunk); }
};

/// Run fn(chunk_id, begin, end) for every chunk, spreading chunks over at most
/// worker_count() threads.
template <typename Fn>
void for_each_chunk(const ChunkPlan& plan, Fn&& fn) {
  const std::size_t nc = plan.count();
  const unsigned nt = unsigned(std::min<std::size_t>(worker_count(), nc));
  if (nt <= 1) {
    for (std::size_t c = 0; c < nc; ++c) fn(c, plan.begin(c), plan.end(c));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < nc; c = next++) fn(c, plan.begin(c), plan.end(c));
    });
  }
}

/// Elementwise loop body fn(i) over [0, n).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t chunk = 4096) {
  for_each_chunk(ChunkPlan{n, chunk}, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace csns
