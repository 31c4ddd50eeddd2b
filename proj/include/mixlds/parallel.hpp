#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace mixlds {

/// 0 means "all cores".
inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results to slot i so the output never depends on the worker count.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  const std::size_t threads = std::min<std::size_t>(resolve_workers(workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        // Strided assignment balances rows of a triangular pair loop.
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

/// Pairwise (tree) sum of term(i) over [begin, end). The tree shape depends
/// only on the range, which keeps reductions bit-reproducible.
template <typename Term>
auto pairwise_sum(std::size_t begin, std::size_t end, const Term& term) -> decltype(term(begin)) {
  using Value = decltype(term(begin));
  constexpr std::size_t kLeaf = 8;
  if (end - begin <= kLeaf) {
    Value acc = term(begin);
    for (std::size_t i = begin + 1; i < end; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  Value left = pairwise_sum(begin, mid, term);
  left += pairwise_sum(mid, end, term);
  return left;
}

/// Neumaier-compensated scalar accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Fixed block size for chunked reductions over trajectories; independent of
/// the worker count.
inline constexpr std::size_t kReductionBlock = 64;

/// Sums per-block partial results computed in parallel. block(b, lo, hi) returns
/// the partial over items [lo, hi); blocks are combined with pairwise_sum.
template <typename Block>
auto blocked_reduce(std::size_t n, int workers, const Block& block)
    -> decltype(block(std::size_t{0}, std::size_t{0}, std::size_t{0})) {
  using Value = decltype(block(std::size_t{0}, std::size_t{0}, std::size_t{0}));
  const std::size_t blocks = std::max<std::size_t>(1, (n + kReductionBlock - 1) / kReductionBlock);
  std::vector<Value> partial(blocks);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    partial[b] = block(b, lo, hi);
  });
  return pairwise_sum(0, blocks, [&](std::size_t b) { return partial[b]; });
}

}  // namespace mixlds
