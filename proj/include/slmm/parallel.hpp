#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace slmm {

// Parallel map over [0, n). Work is split into contiguous index blocks and
// each index writes only its own output slot, so results are identical for
// any thread count. Exceptions are rethrown on the calling thread.
inline void parallel_for(int n, int threads,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const int block = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        const int lo = t * block;
        const int hi = std::min(n, lo + block);
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Deterministic pairwise tree reduction over per-index values; the reduction
// order depends only on n, never on scheduling.
template <typename T, typename Combine>
T tree_reduce(std::vector<T> values, T identity, Combine combine) {
  if (values.empty()) return identity;
  while (values.size() > 1) {
    std::vector<T> next;
    next.reserve((values.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < values.size(); i += 2)
      next.push_back(combine(values[i], values[i + 1]));
    if (values.size() % 2 == 1) next.push_back(values.back());
    values = std::move(next);
  }
  return values.front();
}

}  // namespace slmm
