#pragma once

#include "obsw/solution.hpp"

namespace obsw {

// Largest admissible penalty-times-step product for the explicit scheme.
inline constexpr double kPenaltyStabilityBound = 0.5;

// Explicit penalized backward scheme: each step adds
// n*dt * sum_l (cont_i - cont_l + C[i][l])^- to the driver update, recording
// the added amount as dK_i >= 0. Requires n_penalty * dt <= 0.5.
BackwardSolution solve_penalized(const PathBundle& bundle, const ProblemSpec& spec,
                                 const TimeGrid& grid, int n_penalty, int basis_degree);

// Single-node penalized update, exposed for direct verification. u must hold
// cont + f*dt; the penalty argument is the continuation vector itself.
void backward_step_penalized(const SwitchingCostMatrix& costs, int n_penalty, double dt,
                             std::span<const double> u, std::span<const double> cont,
                             std::span<double> y_out, std::span<double> dk_out);

// A-priori-estimate diagnostics for a penalized solution.
struct PairViolation {
  int i, j;                 // 1-based
  double sup_violation;     // sup_k mean_p e^{lambda t_k} ((Y_i - Y_j + C_ij)^-)^2
  double integrated_n2;     // n^2 * sum_k dt e^{lambda t_k} mean_p (...)^2
};

struct PenaltyViolationReport {
  std::vector<PairViolation> pairs;
  double sup_violation = 0.0;   // max over pairs
  double integrated_n2 = 0.0;   // max over pairs
};

PenaltyViolationReport penalty_violation_norm(const BackwardSolution& sol,
                                              const SwitchingCostMatrix& costs, double lambda);

// sup_k path-average of e^{lambda t_k} |Y^n - Y^m|^2, maximized over modes.
// Both solutions must be penalized solves on the same grid and bundle shape.
double cauchy_gap(const BackwardSolution& sol_n, const BackwardSolution& sol_m, double lambda);
std::vector<double> cauchy_gap_per_mode(const BackwardSolution& sol_n,
                                        const BackwardSolution& sol_m, double lambda);

}  // namespace obsw
