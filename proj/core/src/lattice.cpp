#include "obsw/lattice.hpp"

#include <cmath>
#include <limits>

#include "obsw/reflected.hpp"

namespace obsw {

double LatticeModel::node_state(int k, int m) const {
  const double step = sigma * std::sqrt(grid.dt());
  return x0 + step * (2.0 * m - k);
}

namespace {

double constant_sigma(const ProblemSpec& spec) {
  if (!spec.switching())
    raise(errc::unsupported, "the lattice oracle requires the switching application mode");
  for (int i = 0; i < spec.num_modes(); ++i) {
    const Expr& s = spec.sigma_expr(i);
    if (s.vars_used() != 0)
      raise(errc::unsupported,
            "the lattice oracle requires a constant sigma (sigma[" + std::to_string(i + 1) +
                "] depends on " + var_mask_names(s.vars_used()) + ")");
  }
  const double v = spec.sigma_expr(0).eval(0.0, 0.0, 0.0, 0.0);
  for (int i = 1; i < spec.num_modes(); ++i)
    if (spec.sigma_expr(i).eval(0.0, 0.0, 0.0, 0.0) != v)
      raise(errc::unsupported, "the lattice oracle requires a mode-independent sigma");
  return v;
}

}  // namespace

LatticeModel dp_solve(const ProblemSpec& spec, int n_steps) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  if (n_steps < 1 || n_steps > kMaxOracleSteps)
    raise(errc::unsupported,
          "oracle step count must lie in [1, " + std::to_string(kMaxOracleSteps) + "]");

  LatticeModel lat;
  lat.grid = TimeGrid::uniform(spec.horizon.t_cap, n_steps);
  lat.sigma = constant_sigma(spec);
  lat.x0 = spec.x0;
  lat.n_modes = spec.num_modes();

  const int d = lat.n_modes;
  const int n = n_steps;
  const double dt = lat.grid.dt();
  const double sqrt_dt = std::sqrt(dt);
  const std::size_t nodes = lat.nodes();
  lat.value.assign(static_cast<std::size_t>(d) * nodes, 0.0);

  const auto value_ref = [&](int i, int k, int m) -> double& {
    return lat.value[static_cast<std::size_t>(i) * nodes + LatticeModel::tri_index(k, m)];
  };

  for (int m = 0; m <= n; ++m) {
    const double g = spec.terminal(lat.node_state(n, m));
    for (int i = 0; i < d; ++i) value_ref(i, n, m) = g;
  }

  std::vector<double> u(static_cast<std::size_t>(d)), dkv(static_cast<std::size_t>(d));
  for (int k = n - 1; k >= 0; --k) {
    const double t = lat.grid.time(k);
    for (int m = 0; m <= k; ++m) {
      const double x = lat.node_state(k, m);
      if (spec.horizon.has_exit() && !spec.horizon.inside(x)) {
        const double g = spec.terminal(x);
        for (int i = 0; i < d; ++i) value_ref(i, k, m) = g;  // absorbing
        continue;
      }
      for (int i = 0; i < d; ++i) {
        const double up = value_ref(i, k + 1, m + 1);
        const double down = value_ref(i, k + 1, m);
        const double c = 0.5 * (up + down);
        const double zl = (up - down) / (2.0 * sqrt_dt);  // martingale-increment slope
        u[i] = c + spec.driver(t, x, c, zl, i) * dt;
      }
      reflect(spec.costs, u, dkv);
      for (int i = 0; i < d; ++i) value_ref(i, k, m) = u[i];
    }
  }
  return lat;
}

namespace {

struct TiltedStep {
  double p_up, p_down;
};

TiltedStep tilt(const ProblemSpec& spec, double t, double x, int mode, double sqrt_dt) {
  const double b = spec.drift(t, x, mode);
  const double s = b * sqrt_dt;
  if (std::fabs(s) > 1.0)
    raise(errc::unsupported,
          "lattice too coarse for the drift tilt: |b|*sqrt(dt) = " + std::to_string(std::fabs(s)) +
              " exceeds 1");
  return {0.5 * (1.0 + s), 0.5 * (1.0 - s)};
}

class Enumerator {
public:
  Enumerator(const ProblemSpec& spec, int n_steps)
      : spec_(spec), n_(n_steps), d_(spec.num_modes()) {
    lat_.grid = TimeGrid::uniform(spec.horizon.t_cap, n_steps);
    lat_.sigma = constant_sigma(spec);
    lat_.x0 = spec.x0;
    lat_.n_modes = d_;
    sqrt_dt_ = std::sqrt(lat_.grid.dt());
    const std::size_t slots = lat_.nodes() * static_cast<std::size_t>(d_);
    memo_.assign(slots, std::numeric_limits<double>::quiet_NaN());
    action_.assign(slots, -1);
  }

  std::size_t slot(int k, int m, int mode) const {
    return LatticeModel::tri_index(k, m) * static_cast<std::size_t>(d_) + mode;
  }

  // Best value over every mode assignment in the subtree rooted at state
  // (node (k,m), arrival mode). Tries every action exhaustively.
  double best(int k, int m, int mode) {
    const double x = lat_.node_state(k, m);
    if (k == n_) return spec_.terminal(x);
    if (spec_.horizon.has_exit() && !spec_.horizon.inside(x)) return spec_.terminal(x);
    const std::size_t s = slot(k, m, mode);
    if (!std::isnan(memo_[s])) return memo_[s];
    ++evaluated_;

    const double t = lat_.grid.time(k);
    const double dt = lat_.grid.dt();
    double best_v = -std::numeric_limits<double>::infinity();
    std::int8_t best_a = -1;
    for (int j = 0; j < d_; ++j) {
      const double cost = j == mode ? 0.0 : spec_.costs(mode, j);
      const TiltedStep ts = tilt(spec_, t, x, j, sqrt_dt_);
      const double contv =
          ts.p_up * best(k + 1, m + 1, j) + ts.p_down * best(k + 1, m, j);
      const double v = -cost + spec_.running_reward(t, x, j) * dt + contv;
      if (v > best_v) {
        best_v = v;
        best_a = static_cast<std::int8_t>(j);
      }
    }
    memo_[s] = best_v;
    action_[s] = best_a;
    return best_v;
  }

  EnumerationResult run() {
    EnumerationResult res;
    res.value = best(0, 0, spec_.initial_mode);
    res.n_steps = n_;
    res.n_modes = d_;
    res.policy = action_;
    res.states_evaluated = evaluated_;
    return res;
  }

private:
  const ProblemSpec& spec_;
  int n_, d_;
  LatticeModel lat_;
  double sqrt_dt_ = 0.0;
  std::vector<double> memo_;
  std::vector<std::int8_t> action_;
  std::size_t evaluated_ = 0;
};

}  // namespace

EnumerationResult enumerate_strategies(const ProblemSpec& spec, int n_steps,
                                       int max_modes_per_node) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  const int d = spec.num_modes();
  if (n_steps < 1 || n_steps > kMaxEnumerationSteps || d > kMaxEnumerationModes ||
      d > max_modes_per_node) {
    const double nodes = 0.5 * n_steps * (n_steps + 1);
    raise(errc::unsupported,
          "strategy enumeration refused: search space ~ d^(d*nodes) = " + std::to_string(d) +
              "^" + std::to_string(static_cast<long long>(d * nodes)) +
              " (enforced bounds: N <= " + std::to_string(kMaxEnumerationSteps) +
              ", d <= " + std::to_string(std::min(kMaxEnumerationModes, max_modes_per_node)) +
              ")");
  }
  return Enumerator(spec, n_steps).run();
}

double evaluate_policy_on_lattice(const ProblemSpec& spec, int n_steps,
                                  const std::function<int(int, int, int)>& policy) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  LatticeModel lat;
  lat.grid = TimeGrid::uniform(spec.horizon.t_cap, n_steps);
  lat.sigma = constant_sigma(spec);
  lat.x0 = spec.x0;
  lat.n_modes = spec.num_modes();
  const int d = lat.n_modes;
  const int n = n_steps;
  const double dt = lat.grid.dt();
  const double sqrt_dt = std::sqrt(dt);

  // W[(k,m), i] = value-to-go arriving at node (k,m) in mode i, backward.
  std::vector<double> next(static_cast<std::size_t>((n + 1) * d)),
      cur(static_cast<std::size_t>((n + 1) * d));
  for (int m = 0; m <= n; ++m) {
    const double g = spec.terminal(lat.node_state(n, m));
    for (int i = 0; i < d; ++i) next[static_cast<std::size_t>(m) * d + i] = g;
  }
  for (int k = n - 1; k >= 0; --k) {
    const double t = lat.grid.time(k);
    for (int m = 0; m <= k; ++m) {
      const double x = lat.node_state(k, m);
      const bool absorbed = spec.horizon.has_exit() && !spec.horizon.inside(x);
      for (int i = 0; i < d; ++i) {
        double v;
        if (absorbed) {
          v = spec.terminal(x);
        } else {
          const int j = policy(k, m, i);
          if (j < 0 || j >= d) raise(errc::structural, "policy returned a mode outside the set");
          const double cost = j == i ? 0.0 : spec.costs(i, j);
          const TiltedStep ts = tilt(spec, t, x, j, sqrt_dt);
          const double contv = ts.p_up * next[static_cast<std::size_t>(m + 1) * d + j] +
                               ts.p_down * next[static_cast<std::size_t>(m) * d + j];
          v = -cost + spec.running_reward(t, x, j) * dt + contv;
        }
        cur[static_cast<std::size_t>(m) * d + i] = v;
      }
    }
    std::swap(cur, next);
  }
  return next[static_cast<std::size_t>(0) * d + spec.initial_mode];
}

}  // namespace obsw
