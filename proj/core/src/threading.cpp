#include "obsw/threading.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

namespace obsw {

namespace {
std::atomic<unsigned> g_override{0};

unsigned env_threads() {
  if (const char* s = std::getenv("OBSW_THREADS")) {
    const long v = std::strtol(s, nullptr, 10);
    if (v >= 1 && v <= 1024) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}
}  // namespace

unsigned worker_threads() {
  const unsigned o = g_override.load(std::memory_order_relaxed);
  return o ? o : env_threads();
}

void set_worker_threads(unsigned n) { g_override.store(n, std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const unsigned workers = worker_threads();
  if (workers <= 1 || n < 2048) {
    fn(0, n);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(workers, n);
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(chunks);
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t b = c * per;
    const std::size_t e = std::min(n, b + per);
    if (b >= e) break;
    pool.emplace_back([&fn, &errors, c, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
}

double pairwise_sum(std::span<const double> v) {
  return pairwise_sum(v.size(), [&](std::size_t i) { return v[i]; });
}

double running_mean(std::span<const double> v) {
  double m = 0.0;
  double k = 0.0;
  for (double x : v) {
    k += 1.0;
    m += (x - m) / k;
  }
  return m;
}

MeanStderr mean_stderr(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return {0.0, 0.0};
  const double mean = pairwise_sum(v) / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  const double ss = pairwise_sum(n, [&](std::size_t i) {
    const double d = v[i] - mean;
    return d * d;
  });
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace obsw
