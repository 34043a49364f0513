#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "obsw/model.hpp"

namespace obsw {

struct TimeGrid {
  double t_cap = 1.0;
  int n_steps = 1;

  double dt() const { return t_cap / n_steps; }
  // time(n_steps) == t_cap exactly
  double time(int k) const { return (static_cast<double>(k) * t_cap) / n_steps; }

  static TimeGrid uniform(double t_cap, int n_steps);
  bool operator==(const TimeGrid&) const = default;
};

// Simulated forward system: one driving Brownian motion shared by all modes,
// per-mode Euler-Maruyama states, first-exit stopping indices and per-mode
// Girsanov log-weight increments. Immutable once built.
class PathBundle {
public:
  TimeGrid grid;
  int n_modes = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;

  std::vector<double> dw;           // [k][p], k in [0, N)
  std::vector<double> x;            // [i][k][p], k in [0, N]
  std::vector<std::int32_t> kappa;  // [p], stopping index in [0, N]
  std::vector<double> dg;           // [i][k][p], k in [0, N)

  double dW(int k, std::size_t p) const { return dw[static_cast<std::size_t>(k) * n_paths + p]; }
  double state(int i, int k, std::size_t p) const { return x[state_index(i, k, p)]; }
  double girsanov_increment(int i, int k, std::size_t p) const {
    return dg[(static_cast<std::size_t>(i) * grid.n_steps + k) * n_paths + p];
  }
  std::size_t state_index(int i, int k, std::size_t p) const {
    return (static_cast<std::size_t>(i) * (grid.n_steps + 1) + k) * n_paths + p;
  }
  std::span<const double> states_at(int i, int k) const {
    return {x.data() + state_index(i, k, 0), n_paths};
  }
  std::span<const double> dw_at(int k) const {
    return {dw.data() + static_cast<std::size_t>(k) * n_paths, n_paths};
  }
};

// Euler-Maruyama over the grid. Deterministic in (seed, n_paths, N, spec) for
// any worker count. Coefficient evaluation failures abort with the
// (mode, step, path) location.
PathBundle simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, std::size_t n_paths,
                            std::uint64_t seed);

// Per-path Girsanov log-weight along a fixed per-step mode schedule:
// sum_k b(t_k, X, mode_k) dW_k - 1/2 sum_k b^2 dt, truncated at kappa[p].
std::vector<double> girsanov_logweight(const PathBundle& bundle, std::span<const int> mode_path,
                                       const ProblemSpec& spec);

// Binary replay dump: little-endian doubles, header with dims and seed.
void dump_paths(const PathBundle& bundle, const std::filesystem::path& file);
PathBundle load_paths(const std::filesystem::path& file);

}  // namespace obsw
