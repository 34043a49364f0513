#pragma once

#include <cstddef>
#include <functional>
#include <span>

// Parallelism helpers. Parallel regions only ever write to disjoint indices;
// every reduction is performed by a fixed-order scheme, so numeric output is
// independent of the worker count (env OBSW_THREADS or set_worker_threads).

namespace obsw {

// Number of workers: explicit override > OBSW_THREADS > hardware concurrency.
unsigned worker_threads();

// 0 restores automatic (environment-driven) selection.
void set_worker_threads(unsigned n);

// Runs fn(begin, end) on contiguous chunks of [0, n), possibly concurrently.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Deterministic pairwise summation of f(0) + ... + f(n-1).
template <class F>
double pairwise_sum(std::size_t begin, std::size_t end, F&& f) {
  const std::size_t n = end - begin;
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += f(i);
    return s;
  }
  const std::size_t mid = begin + n / 2;
  return pairwise_sum(begin, mid, f) + pairwise_sum(mid, end, f);
}

template <class F>
double pairwise_sum(std::size_t n, F&& f) {
  return pairwise_sum<F>(0, n, std::forward<F>(f));
}

double pairwise_sum(std::span<const double> v);

// Running (Welford) mean; exact when all inputs are identical.
double running_mean(std::span<const double> v);

struct MeanStderr {
  double mean;
  double se;
};

// Sample mean and standard error of the mean (pairwise sums).
MeanStderr mean_stderr(std::span<const double> v);

}  // namespace obsw
