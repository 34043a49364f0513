#include "obsw/switching.hpp"

#include <cmath>
#include <limits>

#include "obsw/rng.hpp"
#include "obsw/threading.hpp"

namespace obsw {

int Strategy::mode_at(std::size_t p, int k) const {
  int mode = initial_mode;
  for (const SwitchEvent& s : switches[p]) {
    if (s.step > k) break;
    mode = s.to;
  }
  return mode;
}

std::vector<int> Strategy::mode_path(std::size_t p) const {
  std::vector<int> out(static_cast<std::size_t>(n_steps), initial_mode);
  int mode = initial_mode;
  std::size_t next = 0;
  const auto& sw = switches[p];
  for (int k = 0; k < n_steps; ++k) {
    while (next < sw.size() && sw[next].step == k) {
      mode = sw[next].to;
      ++next;
    }
    out[static_cast<std::size_t>(k)] = mode;
  }
  return out;
}

double Strategy::switch_cost_at(std::size_t p, int k, const SwitchingCostMatrix& costs) const {
  double c = 0.0;
  for (const SwitchEvent& s : switches[p])
    if (s.step == k) c += costs(s.from, s.to);
  return c;
}

std::size_t Strategy::total_switches() const {
  std::size_t n = 0;
  for (const auto& sw : switches) n += sw.size();
  return n;
}

double Strategy::mean_cost() const {
  if (total_cost.empty()) return 0.0;
  return pairwise_sum(std::span<const double>(total_cost)) /
         static_cast<double>(total_cost.size());
}

double default_switch_tol(const BackwardSolution& sol) {
  return 1e-9 * (1.0 + sol.value_scale());
}

Strategy extract_strategy(const BackwardSolution& sol, const PathBundle& bundle,
                          const SwitchingCostMatrix& costs, int i0, double tol) {
  if (sol.n_paths != bundle.n_paths || !(sol.grid == bundle.grid))
    raise(errc::structural, "solution does not match the path bundle");
  if (i0 < 0 || i0 >= sol.n_modes) raise(errc::structural, "initial mode outside the mode set");
  if (tol < 0.0) raise(errc::parameter, "tolerance must be nonnegative");

  Strategy st;
  st.initial_mode = i0;
  st.n_steps = sol.grid.n_steps;
  st.n_paths = sol.n_paths;
  st.switches.resize(sol.n_paths);
  st.total_cost.assign(sol.n_paths, 0.0);
  const int d = sol.n_modes;
  if (d == 1) return st;

  parallel_for(sol.n_paths, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      int mode = i0;
      const int stop = bundle.kappa[p];
      for (int k = 0; k < stop; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (int j = 0; j < d; ++j) {
          if (j == mode) continue;
          const double v = sol.value(j, k, p) - costs(mode, j);
          if (v > best) {  // strict: ties keep the smallest mode index
            best = v;
            best_j = j;
          }
        }
        if (best_j >= 0 && sol.value(mode, k, p) <= best + tol) {
          st.switches[p].push_back({k, mode, best_j});
          st.total_cost[p] += costs(mode, best_j);
          mode = best_j;
        }
      }
    }
  });
  return st;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

FeedbackPolicy::FeedbackPolicy(const BackwardSolution& sol, const ProblemSpec& spec, double tol)
    : sol_(&sol), spec_(&spec), tol_(tol) {
  if (spec.num_modes() != sol.n_modes)
    raise(errc::structural, "solution and problem disagree on the mode count");
}

void FeedbackPolicy::field_values(int k, double x, std::span<double> out) const {
  const int d = sol_->n_modes;
  if (k >= sol_->grid.n_steps) {
    const double g = spec_->terminal(x);
    for (int i = 0; i < d; ++i) out[i] = g;
    return;
  }
  // Rebuild the same per-node step the solver applied, at a fresh state.
  constexpr int kInline = 16;
  double sbuf[4 * kInline];
  std::vector<double> heap;
  double* mem = sbuf;
  if (d > kInline) {
    heap.resize(static_cast<std::size_t>(4 * d));
    mem = heap.data();
  }
  double* states = mem;
  double* cont = mem + d;
  double* zest = mem + 2 * d;
  double* dk = mem + 3 * d;
  for (int i = 0; i < d; ++i) {
    const std::size_t fi = sol_->fit_index(i, k);
    states[i] = x;
    cont[i] = sol_->cont_fit[fi](x);
    zest[i] = sol_->z_fit[fi](x);
  }
  step_node_values(*spec_, sol_->scheme, sol_->n_penalty, sol_->grid.time(k), sol_->grid.dt(),
                   std::span<const double>(states, static_cast<std::size_t>(d)),
                   std::span<const double>(cont, static_cast<std::size_t>(d)),
                   std::span<const double>(zest, static_cast<std::size_t>(d)), out,
                   std::span<double>(dk, static_cast<std::size_t>(d)));
}

int FeedbackPolicy::decide(int k, double x, int current_mode, std::size_t) const {
  const int d = sol_->n_modes;
  if (d == 1 || k >= sol_->grid.n_steps) return current_mode;
  constexpr int kInline = 16;
  double buf[kInline];
  std::vector<double> heap;
  double* y = buf;
  if (d > kInline) {
    heap.resize(static_cast<std::size_t>(d));
    y = heap.data();
  }
  field_values(k, x, std::span<double>(y, static_cast<std::size_t>(d)));
  double best = -std::numeric_limits<double>::infinity();
  int best_j = -1;
  for (int j = 0; j < d; ++j) {
    if (j == current_mode) continue;
    const double v = y[j] - spec_->costs(current_mode, j);
    if (v > best) {
      best = v;
      best_j = j;
    }
  }
  if (best_j >= 0 && y[current_mode] <= best + tol_) return best_j;
  return current_mode;
}

ForcedSchedulePolicy::ForcedSchedulePolicy(std::vector<std::pair<int, int>> schedule,
                                           std::string label)
    : schedule_(std::move(schedule)), label_(std::move(label)) {}

int ForcedSchedulePolicy::decide(int k, double, int current_mode, std::size_t) const {
  for (const auto& [step, mode] : schedule_)
    if (step == k) return mode;
  return current_mode;
}

RandomPerturbationPolicy::RandomPerturbationPolicy(const SwitchPolicy& base, int n_modes,
                                                   double prob, std::uint64_t seed,
                                                   std::string label)
    : base_(&base), n_modes_(n_modes), prob_(prob), seed_(seed), label_(std::move(label)) {}

int RandomPerturbationPolicy::decide(int k, double x, int current_mode, std::size_t path) const {
  const double u =
      rng::uniform01(seed_, path, static_cast<std::uint32_t>(k), rng::kPolicy);
  if (u < prob_) {
    return static_cast<int>(rng::uniform_below(seed_ ^ 0x9E3779B97F4A7C15ull, path,
                                               static_cast<std::uint32_t>(k), rng::kPolicy,
                                               static_cast<std::uint32_t>(n_modes_)));
  }
  return base_->decide(k, x, current_mode, path);
}

DelayedPolicy::DelayedPolicy(const SwitchPolicy& base, int delay, std::string label)
    : base_(&base), delay_(delay), label_(std::move(label)) {}

int DelayedPolicy::decide(int k, double x, int current_mode, std::size_t path) const {
  // applies the base rule with a stale step index; still adapted
  const int back = k - delay_;
  if (back < 0) return current_mode;
  return base_->decide(back, x, current_mode, path);
}

// ---------------------------------------------------------------------------
// Profit estimation
// ---------------------------------------------------------------------------

ProfitEstimate estimate_profit(const ProblemSpec& spec, const SwitchPolicy& policy,
                               const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                               Estimator estimator, std::vector<PathProfitRecord>* records) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  if (!spec.switching())
    raise(errc::specification, "profit estimation requires the switching application mode");
  if (n_paths < 1) raise(errc::parameter, "n_paths must be at least 1");
  if (estimator == Estimator::girsanov) {
    if (!spec.hyp.sigma_min || !(*spec.hyp.sigma_min > 0.0) || !spec.hyp.b_bound)
      raise(errc::specification,
            "girsanov estimator refused: hypothesis 5.1(iv)-(v) require a declared "
            "sigma_min floor and b bound");
  }

  const int n = grid.n_steps;
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);
  const bool girsanov = estimator == Estimator::girsanov;

  std::vector<double> payoff(n_paths), weight(n_paths, 1.0), weighted(n_paths);
  std::vector<double> costs_paid(n_paths, 0.0);
  std::vector<std::uint32_t> switch_count(n_paths, 0);
  if (records) records->assign(n_paths, {});

  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      double x = spec.x0;
      int mode = spec.initial_mode;
      double run = 0.0, cost = 0.0, logw = 0.0;
      std::uint32_t nsw = 0;
      for (int k = 0; k < n; ++k) {
        if (spec.horizon.has_exit() && !spec.horizon.inside(x)) break;
        const double t = grid.time(k);
        const int next = policy.decide(k, x, mode, p);
        if (next != mode) {
          cost += spec.costs(mode, next);
          if (records) (*records)[p].switches.push_back({k, mode, next});
          mode = next;
          ++nsw;
        }
        run += spec.running_reward(t, x, mode) * dt;
        const double dw = sqrt_dt * rng::normal(seed, p, static_cast<std::uint32_t>(k),
                                                rng::kBrownian);
        const double sv = spec.diffusion(t, x, mode);
        const double bv = spec.drift(t, x, mode);
        if (girsanov) {
          logw += bv * dw - 0.5 * bv * bv * dt;
          x += sv * dw;
        } else {
          // dynamics induced by the measure change: drift sigma * b
          x += sv * bv * dt + sv * dw;
        }
        if (std::isnan(x))
          raise(errc::evaluation,
                "controlled state is NaN at (step " + std::to_string(k) + ", path " +
                    std::to_string(p) + ")");
      }
      payoff[p] = spec.terminal(x) + run - cost;
      weight[p] = girsanov ? std::exp(logw) : 1.0;
      weighted[p] = girsanov ? weight[p] * payoff[p] : payoff[p];
      costs_paid[p] = cost;
      switch_count[p] = nsw;
      if (records) {
        (*records)[p].payoff = payoff[p];
        (*records)[p].weight = weight[p];
      }
    }
  });

  ProfitEstimate est;
  est.n_paths = n_paths;
  const MeanStderr ms = mean_stderr(weighted);
  est.value = ms.mean;
  est.se = ms.se;
  if (girsanov) {
    const MeanStderr mw = mean_stderr(weight);
    est.mean_weight = mw.mean;
    est.weight_se = mw.se;
  }
  est.mean_cost =
      pairwise_sum(std::span<const double>(costs_paid)) / static_cast<double>(n_paths);
  est.mean_switches = pairwise_sum(n_paths, [&](std::size_t p) {
                        return static_cast<double>(switch_count[p]);
                      }) /
                      static_cast<double>(n_paths);
  std::uint32_t most = 0;
  for (std::uint32_t c : switch_count) most = std::max(most, c);
  est.switch_histogram.assign(most + 1, 0);
  for (std::uint32_t c : switch_count) ++est.switch_histogram[c];
  return est;
}

bool PolicyCheckReport::ok() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

PolicyCheckReport policy_improvement_check(const ProblemSpec& spec, const BackwardSolution& sol,
                                           const TimeGrid& grid, std::size_t n_paths,
                                           std::uint64_t seed,
                                           std::span<const PerturbationSpec> perturbations,
                                           Estimator estimator) {
  const FeedbackPolicy star(sol, spec, default_switch_tol(sol));
  const ProfitEstimate base = estimate_profit(spec, star, grid, n_paths, seed, estimator);

  PolicyCheckReport rep;
  rep.j_star = base.value;
  rep.se_star = base.se;

  for (const PerturbationSpec& pert : perturbations) {
    std::unique_ptr<SwitchPolicy> owned;
    const SwitchPolicy* policy = nullptr;
    switch (pert.kind) {
      case PerturbationSpec::Kind::identity:
        policy = &star;
        break;
      case PerturbationSpec::Kind::never_switch:
        owned = std::make_unique<NeverSwitchPolicy>();
        policy = owned.get();
        break;
      case PerturbationSpec::Kind::always_switch:
        owned = std::make_unique<AlwaysSwitchPolicy>(spec.num_modes());
        policy = owned.get();
        break;
      case PerturbationSpec::Kind::forced:
        owned = std::make_unique<ForcedSchedulePolicy>(
            std::vector<std::pair<int, int>>{{pert.step, pert.to_mode}},
            pert.label.empty() ? "forced" : pert.label);
        policy = owned.get();
        break;
      case PerturbationSpec::Kind::delayed:
        owned = std::make_unique<DelayedPolicy>(star, pert.delay,
                                                pert.label.empty() ? "delayed" : pert.label);
        policy = owned.get();
        break;
      case PerturbationSpec::Kind::random:
        owned = std::make_unique<RandomPerturbationPolicy>(
            star, spec.num_modes(), pert.prob, pert.seed,
            pert.label.empty() ? "random" : pert.label);
        policy = owned.get();
        break;
    }
    const ProfitEstimate e = estimate_profit(spec, *policy, grid, n_paths, seed, estimator);
    PolicyCheckRow row;
    row.name = pert.label.empty() ? policy->name() : pert.label;
    row.j = e.value;
    row.se = e.se;
    const double combined = 3.0 * std::sqrt(base.se * base.se + e.se * e.se);
    row.slack = base.value + combined - e.value;
    row.pass = e.value <= base.value + combined;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace obsw
