#include <array>
#include <cmath>
#include <cstring>
#include <limits>

#include "obsw/penalized.hpp"
#include "obsw/reflected.hpp"
#include "obsw/switching.hpp"
#include "obsw/threading.hpp"

namespace obsw {

const char* to_string(Scheme s) noexcept {
  return s == Scheme::penalized ? "penalized" : "reflected";
}

double BackwardSolution::value_scale() const {
  double m = 0.0;
  for (double v : y) m = std::max(m, std::fabs(v));
  return m;
}

namespace {

inline double neg_part(double v) { return v < 0.0 ? -v : 0.0; }

// Scratch for per-node d-vectors; avoids a heap allocation per path.
struct ModeScratch {
  static constexpr int kInline = 16;
  std::array<double, kInline> buf;
  std::vector<double> heap;
  double* get(int d) {
    if (d <= kInline) return buf.data();
    heap.resize(static_cast<std::size_t>(d));
    return heap.data();
  }
};

void check_stability(int n_penalty, double dt) {
  if (n_penalty < 0) raise(errc::parameter, "penalty level must be nonnegative");
  // tiny relative slack so n*dt == 0.5 survives rounding of dt = t/N
  if (static_cast<double>(n_penalty) * dt > kPenaltyStabilityBound * (1.0 + 1e-12))
    raise(errc::parameter,
          "stability bound violated: n_penalty*dt = " +
              std::to_string(static_cast<double>(n_penalty) * dt) + " exceeds " +
              std::to_string(kPenaltyStabilityBound));
}

void penalty_update(const SwitchingCostMatrix& costs, double n_dt, std::span<const double> cont,
                    std::span<const double> u, std::span<double> y_out,
                    std::span<double> dk_out) {
  const int d = costs.modes;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int l = 0; l < d; ++l) {
      if (l == i) continue;  // the l == i term is identically zero
      s += neg_part(cont[i] - cont[l] + costs(i, l));
    }
    if (s != 0.0) {
      dk_out[i] = n_dt * s;
      y_out[i] = u[i] + dk_out[i];
    } else {
      dk_out[i] = 0.0;
      y_out[i] = u[i];
    }
  }
}

}  // namespace

int reflect(const SwitchingCostMatrix& costs, std::span<double> y, std::span<double> increments) {
  const int d = costs.modes;
  if (static_cast<int>(y.size()) != d || static_cast<int>(increments.size()) != d)
    raise(errc::structural, "reflect: vector size does not match the mode count");
  for (int i = 0; i < d; ++i) increments[i] = y[i];  // stash initial values
  if (d == 1) {
    increments[0] = 0.0;
    return 0;
  }

  ModeScratch scratch;
  double* old = scratch.get(d);
  constexpr double kFixedPointTol = 1e-12;
  int changing_passes = 0;
  for (int pass = 0; pass <= d; ++pass) {
    for (int i = 0; i < d; ++i) old[i] = y[i];
    bool changed = false;
    for (int i = 0; i < d; ++i) {
      double m = old[i];
      for (int j = 0; j < d; ++j) {
        if (j == i) continue;
        const double v = old[j] - costs(i, j);
        if (v > m) m = v;
      }
      y[i] = m;
      if (m - old[i] > kFixedPointTol) changed = true;
    }
    if (!changed) {
      for (int i = 0; i < d; ++i) increments[i] = y[i] - increments[i];
      return changing_passes;
    }
    ++changing_passes;
  }
  raise(errc::invariant,
        "reflection did not reach a fixed point in " + std::to_string(d + 1) +
            " passes; the cost matrix violates the triangle inequality");
}

void step_node_values(const ProblemSpec& spec, Scheme scheme, int n_penalty, double t, double dt,
                      std::span<const double> states, std::span<const double> cont,
                      std::span<const double> zest, std::span<double> y_out,
                      std::span<double> dk_out) {
  const int d = spec.num_modes();
  for (int i = 0; i < d; ++i)
    y_out[i] = cont[i] + spec.driver(t, states[i], cont[i], zest[i], i) * dt;
  if (scheme == Scheme::reflected) {
    reflect(spec.costs, y_out, dk_out);
  } else {
    ModeScratch scratch;
    double* u = scratch.get(d);
    for (int i = 0; i < d; ++i) u[i] = y_out[i];
    penalty_update(spec.costs, static_cast<double>(n_penalty) * dt, cont,
                   std::span<const double>(u, static_cast<std::size_t>(d)), y_out, dk_out);
  }
}

void backward_step_penalized(const SwitchingCostMatrix& costs, int n_penalty, double dt,
                             std::span<const double> u, std::span<const double> cont,
                             std::span<double> y_out, std::span<double> dk_out) {
  check_stability(n_penalty, dt);
  if (u.size() != cont.size() || y_out.size() != u.size() || dk_out.size() != u.size() ||
      static_cast<int>(u.size()) != costs.modes)
    raise(errc::structural, "backward_step_penalized: vector sizes must match the mode count");
  penalty_update(costs, static_cast<double>(n_penalty) * dt, cont, u, y_out, dk_out);
}

namespace {

BackwardSolution solve_backward(const PathBundle& bundle, const ProblemSpec& spec,
                                const TimeGrid& grid, int basis_degree, Scheme scheme,
                                int n_penalty) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  if (!(grid == bundle.grid)) raise(errc::structural, "grid does not match the path bundle");
  if (spec.num_modes() != bundle.n_modes)
    raise(errc::structural, "problem and path bundle disagree on the mode count");
  if (scheme == Scheme::penalized) check_stability(n_penalty, grid.dt());

  const int d = spec.num_modes();
  const int n = grid.n_steps;
  const std::size_t np = bundle.n_paths;
  const double dt = grid.dt();

  BackwardSolution sol;
  sol.scheme = scheme;
  sol.n_penalty = scheme == Scheme::penalized ? n_penalty : 0;
  sol.grid = grid;
  sol.n_modes = d;
  sol.n_paths = np;
  sol.basis_degree = basis_degree;
  sol.y.assign(static_cast<std::size_t>(d) * (n + 1) * np, 0.0);
  sol.z.assign(sol.y.size(), 0.0);
  sol.dk.assign(sol.y.size(), 0.0);
  sol.cont_fit.resize(static_cast<std::size_t>(d) * n);
  sol.z_fit.resize(static_cast<std::size_t>(d) * n);
  sol.fit_degenerate.assign(static_cast<std::size_t>(d) * n, 0);

  // Terminal condition and freeze: Y = g(X_kappa) on every step at or past
  // the stopping index.
  parallel_for(np, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const int kp = bundle.kappa[p];
      for (int i = 0; i < d; ++i) {
        double yterm;
        try {
          yterm = spec.terminal(bundle.state(i, kp, p));
        } catch (const EvalError& e) {
          raise(errc::evaluation, "terminal condition failed at (mode " + std::to_string(i + 1) +
                                      ", step " + std::to_string(kp) + ", path " +
                                      std::to_string(p) + "): " + e.what());
        }
        if (std::isnan(yterm))
          raise(errc::evaluation, "terminal condition produced NaN at path " + std::to_string(p));
        for (int k = kp; k <= n; ++k) sol.y[sol.index(i, k, p)] = yterm;
      }
    }
  });

  std::vector<std::uint32_t> active;
  active.reserve(np);
  std::vector<std::vector<double>> cont(d), zest(d);
  for (int i = 0; i < d; ++i) {
    cont[i].assign(np, 0.0);
    zest[i].assign(np, 0.0);
  }
  std::vector<double> zvals(np, 0.0);

  for (int k = n - 1; k >= 0; --k) {
    active.clear();
    for (std::size_t p = 0; p < np; ++p)
      if (bundle.kappa[p] > static_cast<std::int32_t>(k))
        active.push_back(static_cast<std::uint32_t>(p));
    if (active.empty()) continue;

    const int deg = std::min<int>(basis_degree, static_cast<int>(active.size()) - 1);
    const double tk = grid.time(k);

    for (int i = 0; i < d; ++i) {
      const std::span<const double> ynext(&sol.y[sol.index(i, k + 1, 0)], np);
      const std::span<const double> xk = bundle.states_at(i, k);
      const std::span<const double> dwk = bundle.dw_at(k);

      const FittedPoly cf = condexp_fit(ynext, xk, active, deg);
      for (std::uint32_t p : active) cont[i][p] = cf(xk[p]);
      // centered martingale-increment estimator for Z
      for (std::uint32_t p : active) zvals[p] = (ynext[p] - cont[i][p]) * dwk[p] / dt;
      const FittedPoly zf = condexp_fit(zvals, xk, active, deg);
      for (std::uint32_t p : active) zest[i][p] = zf(xk[p]);

      const std::size_t fi = sol.fit_index(i, k);
      sol.cont_fit[fi] = cf;
      sol.z_fit[fi] = zf;
      sol.fit_degenerate[fi] = (cf.degenerate() || zf.degenerate()) ? 1 : 0;
    }

    parallel_for(active.size(), [&](std::size_t begin, std::size_t end) {
      ModeScratch s_states, s_cont, s_zest, s_y, s_dk;
      double* st = s_states.get(d);
      double* cv = s_cont.get(d);
      double* zv = s_zest.get(d);
      double* yv = s_y.get(d);
      double* dkv = s_dk.get(d);
      for (std::size_t a = begin; a < end; ++a) {
        const std::uint32_t p = active[a];
        for (int i = 0; i < d; ++i) {
          st[i] = bundle.state(i, k, p);
          cv[i] = cont[i][p];
          zv[i] = zest[i][p];
        }
        try {
          step_node_values(spec, scheme, n_penalty, tk, dt,
                           std::span<const double>(st, static_cast<std::size_t>(d)),
                           std::span<const double>(cv, static_cast<std::size_t>(d)),
                           std::span<const double>(zv, static_cast<std::size_t>(d)),
                           std::span<double>(yv, static_cast<std::size_t>(d)),
                           std::span<double>(dkv, static_cast<std::size_t>(d)));
        } catch (const EvalError& e) {
          raise(errc::evaluation, "driver evaluation failed at (step " + std::to_string(k) +
                                      ", path " + std::to_string(p) + "): " + e.what());
        }
        for (int i = 0; i < d; ++i) {
          if (std::isnan(yv[i]))
            raise(errc::evaluation, "backward value is NaN at (mode " + std::to_string(i + 1) +
                                        ", step " + std::to_string(k) + ", path " +
                                        std::to_string(p) + ")");
          sol.y[sol.index(i, k, p)] = yv[i];
          sol.z[sol.index(i, k, p)] = zv[i];
          sol.dk[sol.index(i, k, p)] = dkv[i];
        }
      }
    });
  }

  sol.y0.resize(d);
  sol.y0_se.resize(d);
  for (int i = 0; i < d; ++i) {
    const std::span<const double> row0(&sol.y[sol.index(i, 0, 0)], np);
    sol.y0[i] = running_mean(row0);
    const std::span<const double> row1(&sol.y[sol.index(i, std::min(1, n), 0)], np);
    sol.y0_se[i] = mean_stderr(row1).se;
  }
  return sol;
}

}  // namespace

BackwardSolution solve_penalized(const PathBundle& bundle, const ProblemSpec& spec,
                                 const TimeGrid& grid, int n_penalty, int basis_degree) {
  return solve_backward(bundle, spec, grid, basis_degree, Scheme::penalized, n_penalty);
}

BackwardSolution solve_reflected(const PathBundle& bundle, const ProblemSpec& spec,
                                 const TimeGrid& grid, int basis_degree) {
  return solve_backward(bundle, spec, grid, basis_degree, Scheme::reflected, 0);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

namespace {
double obstacle_at(const BackwardSolution& sol, const SwitchingCostMatrix& costs, int i, int k,
                   std::size_t p) {
  double m = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < sol.n_modes; ++j) {
    if (j == i) continue;
    m = std::max(m, sol.value(j, k, p) - costs(i, j));
  }
  return m;
}
}  // namespace

double skorokhod_residual(const BackwardSolution& sol, const SwitchingCostMatrix& costs) {
  if (sol.n_modes == 1) return 0.0;
  double worst = 0.0;
  for (int i = 0; i < sol.n_modes; ++i) {
    const double mean = pairwise_sum(sol.n_paths, [&](std::size_t p) {
                          double acc = 0.0;
                          for (int k = 0; k <= sol.grid.n_steps; ++k) {
                            const double dkv = sol.dkvalue(i, k, p);
                            if (dkv == 0.0) continue;
                            const double gap = sol.value(i, k, p) - obstacle_at(sol, costs, i, k, p);
                            if (gap > 0.0) acc += gap * dkv;
                          }
                          return acc;
                        }) /
                        static_cast<double>(sol.n_paths);
    worst = std::max(worst, mean);
  }
  return worst;
}

std::vector<double> skorokhod_residual_by_step(const BackwardSolution& sol,
                                               const SwitchingCostMatrix& costs, int mode) {
  std::vector<double> out(static_cast<std::size_t>(sol.grid.n_steps) + 1, 0.0);
  if (sol.n_modes == 1) return out;
  for (int k = 0; k <= sol.grid.n_steps; ++k) {
    out[k] = pairwise_sum(sol.n_paths, [&](std::size_t p) {
               const double dkv = sol.dkvalue(mode, k, p);
               if (dkv == 0.0) return 0.0;
               const double gap = sol.value(mode, k, p) - obstacle_at(sol, costs, mode, k, p);
               return gap > 0.0 ? gap * dkv : 0.0;
             }) /
             static_cast<double>(sol.n_paths);
  }
  return out;
}

double domain_violation(const BackwardSolution& sol, const SwitchingCostMatrix& costs) {
  if (sol.n_modes == 1) return 0.0;
  double worst = 0.0;
  for (int i = 0; i < sol.n_modes; ++i)
    for (int j = 0; j < sol.n_modes; ++j) {
      if (j == i) continue;
      const double cij = costs(i, j);
      for (int k = 0; k <= sol.grid.n_steps; ++k)
        for (std::size_t p = 0; p < sol.n_paths; ++p)
          worst = std::max(worst, sol.value(j, k, p) - cij - sol.value(i, k, p));
    }
  return std::max(worst, 0.0);
}

std::vector<double> domain_violation_by_step(const BackwardSolution& sol,
                                             const SwitchingCostMatrix& costs, int mode) {
  std::vector<double> out(static_cast<std::size_t>(sol.grid.n_steps) + 1, 0.0);
  if (sol.n_modes == 1) return out;
  for (int k = 0; k <= sol.grid.n_steps; ++k) {
    double worst = 0.0;
    for (int j = 0; j < sol.n_modes; ++j) {
      if (j == mode) continue;
      const double cij = costs(mode, j);
      for (std::size_t p = 0; p < sol.n_paths; ++p)
        worst = std::max(worst, sol.value(j, k, p) - cij - sol.value(mode, k, p));
    }
    out[k] = std::max(worst, 0.0);
  }
  return out;
}

PenaltyViolationReport penalty_violation_norm(const BackwardSolution& sol,
                                              const SwitchingCostMatrix& costs, double lambda) {
  if (sol.scheme != Scheme::penalized)
    raise(errc::structural, "penalty_violation_norm requires a penalized solution");
  PenaltyViolationReport rep;
  const double dt = sol.grid.dt();
  const double n2 = static_cast<double>(sol.n_penalty) * static_cast<double>(sol.n_penalty);
  for (int i = 0; i < sol.n_modes; ++i) {
    for (int j = 0; j < sol.n_modes; ++j) {
      if (j == i) continue;
      PairViolation pv{i + 1, j + 1, 0.0, 0.0};
      const double cij = costs(i, j);
      for (int k = 0; k <= sol.grid.n_steps; ++k) {
        const double w = std::exp(lambda * sol.grid.time(k));
        const double mean = pairwise_sum(sol.n_paths, [&](std::size_t p) {
                              const double neg =
                                  neg_part(sol.value(i, k, p) - sol.value(j, k, p) + cij);
                              return neg * neg;
                            }) /
                            static_cast<double>(sol.n_paths);
        pv.sup_violation = std::max(pv.sup_violation, w * mean);
        if (k < sol.grid.n_steps) pv.integrated_n2 += w * mean * dt;
      }
      pv.integrated_n2 *= n2;
      rep.sup_violation = std::max(rep.sup_violation, pv.sup_violation);
      rep.integrated_n2 = std::max(rep.integrated_n2, pv.integrated_n2);
      rep.pairs.push_back(pv);
    }
  }
  return rep;
}

std::vector<double> cauchy_gap_per_mode(const BackwardSolution& sol_n,
                                        const BackwardSolution& sol_m, double lambda) {
  if (sol_n.scheme != Scheme::penalized || sol_m.scheme != Scheme::penalized)
    raise(errc::structural, "cauchy_gap requires two penalized solutions");
  if (!(sol_n.grid == sol_m.grid) || sol_n.n_paths != sol_m.n_paths ||
      sol_n.n_modes != sol_m.n_modes)
    raise(errc::structural, "cauchy_gap requires the same grid and bundle");
  std::vector<double> out(static_cast<std::size_t>(sol_n.n_modes), 0.0);
  for (int i = 0; i < sol_n.n_modes; ++i) {
    double sup = 0.0;
    for (int k = 0; k <= sol_n.grid.n_steps; ++k) {
      const double w = std::exp(lambda * sol_n.grid.time(k));
      const double mean = pairwise_sum(sol_n.n_paths, [&](std::size_t p) {
                            const double dv = sol_n.value(i, k, p) - sol_m.value(i, k, p);
                            return dv * dv;
                          }) /
                          static_cast<double>(sol_n.n_paths);
      sup = std::max(sup, w * mean);
    }
    out[i] = sup;
  }
  return out;
}

double cauchy_gap(const BackwardSolution& sol_n, const BackwardSolution& sol_m, double lambda) {
  double worst = 0.0;
  for (double v : cauchy_gap_per_mode(sol_n, sol_m, lambda)) worst = std::max(worst, v);
  return worst;
}

// ---------------------------------------------------------------------------
// Strategy BSDE
// ---------------------------------------------------------------------------

StrategyValue solve_strategy_bsde(const PathBundle& bundle, const ProblemSpec& spec,
                                  const Strategy& strategy, const TimeGrid& grid,
                                  int basis_degree) {
  if (!(grid == bundle.grid)) raise(errc::structural, "grid does not match the path bundle");
  if (strategy.n_paths != bundle.n_paths || strategy.n_steps != grid.n_steps)
    raise(errc::structural, "strategy does not match the path bundle");
  const int d = spec.num_modes();
  const int n = grid.n_steps;
  const std::size_t np = bundle.n_paths;
  const double dt = grid.dt();

  if (!spec.switching() && strategy.total_switches() > 0)
    raise(errc::unsupported,
          "strategy evaluation with switches requires the switching application mode "
          "(per-mode forward states cannot be spliced)");

  // Per-(step, path) held mode and switching cost paid at that step.
  std::vector<std::int16_t> mode_tab(static_cast<std::size_t>(n) * np);
  std::vector<double> cost_tab(static_cast<std::size_t>(n) * np, 0.0);
  for (std::size_t p = 0; p < np; ++p) {
    int mode = strategy.initial_mode;
    std::size_t next_switch = 0;
    const auto& sw = strategy.switches[p];
    for (int k = 0; k < n; ++k) {
      while (next_switch < sw.size() && sw[next_switch].step == k) {
        cost_tab[static_cast<std::size_t>(k) * np + p] +=
            spec.costs(sw[next_switch].from, sw[next_switch].to);
        mode = sw[next_switch].to;
        ++next_switch;
      }
      mode_tab[static_cast<std::size_t>(k) * np + p] = static_cast<std::int16_t>(mode);
    }
  }

  // In switching mode the system shares one driftless path; use mode 0's
  // states. Otherwise (never-switch strategies only) use the initial mode's.
  const int state_mode = spec.switching() ? 0 : strategy.initial_mode;

  // Value-to-go net of costs already paid: V_kappa = g(X_kappa); backward,
  // V_k = E[V_{k+1} - cost_{k+1} | X_k, mode_k] + f(t_k, x, ., ., mode_k) dt.
  std::vector<double> v(np), target(np, 0.0), contv(np, 0.0), zv(np, 0.0), zfitv(np, 0.0);
  for (std::size_t p = 0; p < np; ++p)
    v[p] = spec.terminal(bundle.state(state_mode, bundle.kappa[p], p));

  std::vector<std::vector<std::uint32_t>> groups(static_cast<std::size_t>(d));
  for (int k = n - 1; k >= 0; --k) {
    for (auto& g : groups) g.clear();
    for (std::size_t p = 0; p < np; ++p) {
      if (bundle.kappa[p] <= static_cast<std::int32_t>(k)) continue;
      groups[static_cast<std::size_t>(mode_tab[static_cast<std::size_t>(k) * np + p])]
          .push_back(static_cast<std::uint32_t>(p));
      const double cnext =
          k + 1 < n ? cost_tab[static_cast<std::size_t>(k + 1) * np + p] : 0.0;
      target[p] = v[p] - cnext;
    }
    const std::span<const double> xk = bundle.states_at(state_mode, k);
    const std::span<const double> dwk = bundle.dw_at(k);
    const double tk = grid.time(k);
    for (int m = 0; m < d; ++m) {
      const auto& idx = groups[static_cast<std::size_t>(m)];
      if (idx.empty()) continue;
      const int deg = std::min<int>(basis_degree, static_cast<int>(idx.size()) - 1);
      const FittedPoly cf = condexp_fit(target, xk, idx, deg);
      for (std::uint32_t p : idx) contv[p] = cf(xk[p]);
      for (std::uint32_t p : idx) zv[p] = (target[p] - contv[p]) * dwk[p] / dt;
      const FittedPoly zf = condexp_fit(zv, xk, idx, deg);
      for (std::uint32_t p : idx) zfitv[p] = zf(xk[p]);
      for (std::uint32_t p : idx)
        v[p] = contv[p] + spec.driver(tk, xk[p], contv[p], zfitv[p], m) * dt;
    }
  }

  std::vector<double> u0(np);
  for (std::size_t p = 0; p < np; ++p) u0[p] = v[p] - (n > 0 ? cost_tab[p] : 0.0);
  const MeanStderr ms = mean_stderr(u0);
  const double mean_cost = pairwise_sum(std::span<const double>(strategy.total_cost)) /
                           static_cast<double>(np);
  if (!std::isfinite(mean_cost))
    raise(errc::invariant, "strategy is not admissible: expected switching cost is not finite");
  return {ms.mean, ms.se, mean_cost};
}

}  // namespace obsw
