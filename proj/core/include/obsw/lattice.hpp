#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "obsw/model.hpp"
#include "obsw/paths.hpp"

namespace obsw {

// Recombining binomial lattice for the driftless diffusion: node states
// x[k][m] = x0 + sigma*sqrt(dt)*(2m - k), up/down probability 1/2. Exact
// conditional expectations replace regression; drift enters through the
// z term of the driver (equivalently, a probability tilt of 1/2*(1 +/- b*sqrt(dt))).
struct LatticeModel {
  TimeGrid grid;
  double sigma = 0.0;
  double x0 = 0.0;
  int n_modes = 0;
  std::vector<double> value;  // [i][node], triangular node layout

  static std::size_t tri_index(int k, int m) {
    return static_cast<std::size_t>(k) * (k + 1) / 2 + m;
  }
  std::size_t nodes() const { return tri_index(grid.n_steps, 0) + grid.n_steps + 1; }
  double node_state(int k, int m) const;
  double value_at(int i, int k, int m) const {
    return value[static_cast<std::size_t>(i) * nodes() + tri_index(k, m)];
  }
};

inline constexpr int kMaxOracleSteps = 200;
inline constexpr int kMaxEnumerationSteps = 6;
inline constexpr int kMaxEnumerationModes = 3;

// Exact backward dynamic programming for the reflected system on the
// lattice. Requires the switching application mode and a constant sigma;
// anything else is refused with errc::unsupported. Nodes outside the exit
// interval are absorbing with value g(x).
LatticeModel dp_solve(const ProblemSpec& spec, int n_steps);

struct EnumerationResult {
  double value = 0.0;
  int n_steps = 0;
  int n_modes = 0;
  // argmax action per (node, arrival mode): action[node*d + i] = mode to hold
  std::vector<std::int8_t> policy;
  std::size_t states_evaluated = 0;
};

// Exhaustive optimal-strategy search over every adapted feedback policy
// (one mode choice per (node, arrival-mode) state), sharing no formulation
// with dp_solve: expectations use the tilted one-step probabilities
// 1/2*(1 +/- b*sqrt(dt)) and costs/rewards are accounted explicitly. The
// per-state action search is exhaustive; memoization over states makes the
// joint policy space tractable (the maximum of an additive objective
// decomposes state by state). Enforced desk-scale bounds: N <= 6, d <= 3.
EnumerationResult enumerate_strategies(const ProblemSpec& spec, int n_steps,
                                       int max_modes_per_node);

// Value of a fixed feedback policy (mode choice per (node, arrival mode)) on
// the lattice, by the same tilted expectation. Used to cross-check the
// enumeration result against hand-written policies.
double evaluate_policy_on_lattice(const ProblemSpec& spec, int n_steps,
                                  const std::function<int(int k, int m, int mode)>& policy);

}  // namespace obsw
