#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "obsw/paths.hpp"
#include "obsw/threading.hpp"
#include "test_support.hpp"

using namespace obsw;

TEST_CASE("time grid hits the cap exactly") {
  const TimeGrid g = TimeGrid::uniform(1.0, 7);
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(7) == 1.0);
  const TimeGrid g2 = TimeGrid::uniform(2.5, 3);
  CHECK(g2.time(3) == 2.5);
}

TEST_CASE("deterministic dynamics") {
  SUBCASE("b = sigma = 0 freezes the state") {
    const ProblemSpec spec = test::frozen_spec(2, 10);
    const PathBundle b = simulate_forward(spec, TimeGrid::uniform(1.0, 10), 64, 5);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k <= 10; ++k)
        for (std::size_t p = 0; p < 64; ++p) CHECK(b.state(i, k, p) == 1.0);
  }
  SUBCASE("b = 1, sigma = 0 integrates exactly") {
    const ProblemSpec spec = test::general_1d("1", "0", "0", "x", 10);
    const PathBundle b = simulate_forward(spec, TimeGrid::uniform(1.0, 10), 8, 5);
    for (std::size_t p = 0; p < 8; ++p)
      CHECK(b.state(0, 10, p) == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("driftless diffusion moments match") {
  // b = 0, sigma = 0.2, x0 = 1: X_T ~ N(1, 0.04) at T = 1
  const ProblemSpec spec = test::general_1d("0", "0.2", "0", "x", 10);
  const std::size_t n = 100000;
  const PathBundle b = simulate_forward(spec, TimeGrid::uniform(1.0, 10), n, 20240601);
  const auto xn = b.states_at(0, 10);
  const double mean = pairwise_sum(xn) / static_cast<double>(n);
  const double var = pairwise_sum(n, [&](std::size_t p) {
                       const double d = xn[p] - mean;
                       return d * d;
                     }) /
                     static_cast<double>(n - 1);
  CHECK(std::fabs(mean - 1.0) < 3.0 * 0.2 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var - 0.04) < 0.05 * 0.04);
}

TEST_CASE("brownian increment sanity") {
  const ProblemSpec spec = test::general_1d("0", "1", "0", "x", 20);
  const std::size_t n = 5000;  // n * N = 1e5 draws
  const PathBundle b = simulate_forward(spec, TimeGrid::uniform(1.0, 20), n, 99);
  const double dt = 1.0 / 20;
  const std::size_t total = n * 20;
  double sum = 0.0, sumsq = 0.0;
  for (int k = 0; k < 20; ++k)
    for (std::size_t p = 0; p < n; ++p) {
      sum += b.dW(k, p);
      sumsq += b.dW(k, p) * b.dW(k, p);
    }
  const double mean = sum / static_cast<double>(total);
  const double var = sumsq / static_cast<double>(total);
  CHECK(std::fabs(mean) <= 4.0 * std::sqrt(dt / static_cast<double>(total)));
  CHECK(std::fabs(var / dt - 1.0) <= 0.05);
}

TEST_CASE("reproducibility across worker counts") {
  const ProblemSpec spec = test::desk2();
  const TimeGrid grid = TimeGrid::uniform(1.0, 10);
  set_worker_threads(1);
  const PathBundle one = simulate_forward(spec, grid, 4096, 7);
  set_worker_threads(8);
  const PathBundle eight = simulate_forward(spec, grid, 4096, 7);
  set_worker_threads(0);
  CHECK(one.dw == eight.dw);
  CHECK(one.x == eight.x);
  CHECK(one.kappa == eight.kappa);
  CHECK(one.dg == eight.dg);
}

TEST_CASE("exit bounds freeze the whole system at the first exit") {
  ProblemSpec spec = test::general_1d("0", "1", "0", "x", 25);
  spec.horizon.exit_lo = 0.0;
  spec.horizon.exit_hi = 2.0;
  spec.finalize();
  const TimeGrid grid = TimeGrid::uniform(1.0, 25);
  const PathBundle b = simulate_forward(spec, grid, 2000, 31);
  bool some_stopped = false;
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    const int kp = b.kappa[p];
    if (kp < 25) {
      some_stopped = true;
      const double xs = b.state(0, kp, p);
      CHECK((xs <= 0.0 || xs >= 2.0));
    }
    for (int k = kp; k <= 25; ++k) CHECK(b.state(0, k, p) == b.state(0, kp, p));
    for (int k = 0; k < kp; ++k) {
      const double xi = b.state(0, k, p);
      CHECK(xi > 0.0);
      CHECK(xi < 2.0);
    }
  }
  CHECK(some_stopped);  // sigma = 1 over a unit horizon certainly exits
}

TEST_CASE("girsanov log-weights") {
  const ProblemSpec spec = test::desk2();
  const TimeGrid grid = TimeGrid::uniform(1.0, 10);
  const std::size_t n = 100000;
  const PathBundle b = simulate_forward(spec, grid, n, 123);

  SUBCASE("zero drift gives weight one") {
    ProblemSpec zero = test::desk2();
    zero.coeffs.b = {Expr::parse("0"), Expr::parse("0")};
    zero.finalize();
    const PathBundle bz = simulate_forward(zero, grid, 128, 123);
    const std::vector<int> modes(10, 0);
    for (double w : girsanov_logweight(bz, modes, zero)) CHECK(w == 0.0);
  }

  SUBCASE("constant drift reduces to beta*W - beta^2*tau/2") {
    const std::vector<int> modes(10, 0);  // mode 1 has b = 0.2
    const auto logw = girsanov_logweight(b, modes, spec);
    for (std::size_t p = 0; p < 50; ++p) {
      double wsum = 0.0;
      for (int k = 0; k < 10; ++k) wsum += b.dW(k, p);
      const double expect = 0.2 * wsum - 0.5 * 0.2 * 0.2 * 1.0;
      CHECK(logw[p] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("the density is a unit-mean martingale") {
    ProblemSpec spec3 = test::desk2();
    spec3.coeffs.b = {Expr::parse("0.3"), Expr::parse("0.3")};
    spec3.finalize();
    const PathBundle b3 = simulate_forward(spec3, grid, n, 777);
    const std::vector<int> modes(10, 0);
    const auto logw = girsanov_logweight(b3, modes, spec3);
    std::vector<double> w(n);
    for (std::size_t p = 0; p < n; ++p) w[p] = std::exp(logw[p]);
    const MeanStderr ms = mean_stderr(w);
    CHECK(std::fabs(ms.mean - 1.0) <= 3.0 * ms.se);
  }
}

TEST_CASE("path dump round trip") {
  const ProblemSpec spec = test::desk2();
  const TimeGrid grid = TimeGrid::uniform(1.0, 6);
  const PathBundle b = simulate_forward(spec, grid, 512, 2024);
  const std::filesystem::path file =
      std::filesystem::temp_directory_path() / "obsw_paths_test.bin";
  dump_paths(b, file);
  const PathBundle r = load_paths(file);
  CHECK(r.seed == b.seed);
  CHECK(r.grid == b.grid);
  CHECK(r.n_modes == b.n_modes);
  CHECK(r.n_paths == b.n_paths);
  CHECK(r.dw == b.dw);
  CHECK(r.x == b.x);
  CHECK(r.kappa == b.kappa);
  CHECK(r.dg == b.dg);
  std::filesystem::remove(file);
}

TEST_CASE("coefficient failures abort with a location") {
  const ProblemSpec spec = test::general_1d("1/(x - 1)", "0", "0", "x", 4);
  try {
    simulate_forward(spec, TimeGrid::uniform(1.0, 4), 4, 1);  // x0 = 1 divides by zero
    FAIL("expected an evaluation error");
  } catch (const Error& e) {
    CHECK(e.kind() == errc::evaluation);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}
