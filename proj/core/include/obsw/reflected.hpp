#pragma once

#include "obsw/solution.hpp"

namespace obsw {

struct Strategy;  // switching.hpp

// Oblique reflection onto the closed domain
// Q-bar = { y : y_i >= max_j (y_j - C[i][j]) }. Iterates the lift
// M[y]_i = max(y_i, max_{j != i} (y_j - C[i][j])) synchronously until no
// component moves by more than 1e-12 (one pass suffices under the weak
// triangle inequality; at most d passes are attempted). Components move only
// upward; the per-component increase is returned through increments.
// Returns the number of passes applied. Throws errc::invariant if a fixed
// point is not reached in d+1 passes, which indicates an invalid cost matrix.
int reflect(const SwitchingCostMatrix& costs, std::span<double> y, std::span<double> increments);

// Direct scheme for the obliquely reflected system: the penalized loop with
// the penalty replaced by reflect() applied to the post-driver values. The
// resulting Y lies in Q-bar at every (step, path).
BackwardSolution solve_reflected(const PathBundle& bundle, const ProblemSpec& spec,
                                 const TimeGrid& grid, int basis_degree);

// Discrete Skorokhod integral: max over modes of the path-average of
// sum_k (Y_i[k] - max_{j != i}(Y_j[k] - C[i][j]))^+ * dK_i[k]. Zero means K
// grows only on the obstacle boundary.
double skorokhod_residual(const BackwardSolution& sol, const SwitchingCostMatrix& costs);

// Per-step variant for the diagnostics CSV.
std::vector<double> skorokhod_residual_by_step(const BackwardSolution& sol,
                                               const SwitchingCostMatrix& costs, int mode);

// Worst constraint breach max_{i,j!=i,k,p} (Y_j - C[i][j] - Y_i)^+.
double domain_violation(const BackwardSolution& sol, const SwitchingCostMatrix& costs);
std::vector<double> domain_violation_by_step(const BackwardSolution& sol,
                                             const SwitchingCostMatrix& costs, int mode);

struct StrategyValue {
  double value = 0.0;  // U(0): strategy value net of all switching costs
  double se = 0.0;
  double mean_total_cost = 0.0;  // admissibility diagnostic
};

// Value of a fixed switching strategy via the one-dimensional switched BSDE,
// solved backward with the cost process folded into the terminal condition
// (the shift U~ = U + A^alpha) and regression conditioned on (state, current
// mode). All switching costs are deducted, including a switch at step 0.
StrategyValue solve_strategy_bsde(const PathBundle& bundle, const ProblemSpec& spec,
                                  const Strategy& strategy, const TimeGrid& grid,
                                  int basis_degree);

}  // namespace obsw
