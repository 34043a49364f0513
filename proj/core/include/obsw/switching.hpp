#pragma once

#include <memory>
#include <string>

#include "obsw/reflected.hpp"
#include "obsw/solution.hpp"

namespace obsw {

struct SwitchEvent {
  int step;
  int from;  // 0-based modes
  int to;
};

// Pathwise switching strategy on a path bundle: ordered switch events per
// path, all at steps strictly before the path's stopping index.
struct Strategy {
  int initial_mode = 0;
  int n_steps = 0;
  std::size_t n_paths = 0;
  std::vector<std::vector<SwitchEvent>> switches;
  std::vector<double> total_cost;  // per path

  // Mode held over [t_k, t_{k+1}); a switch recorded at step k applies at k.
  int mode_at(std::size_t p, int k) const;
  std::vector<int> mode_path(std::size_t p) const;
  double switch_cost_at(std::size_t p, int k, const SwitchingCostMatrix& costs) const;
  std::size_t total_switches() const;
  double mean_cost() const;
};

// Walks each path forward from i0 and switches whenever the solved field
// touches the obstacle within tol; argmax ties break to the smallest mode.
Strategy extract_strategy(const BackwardSolution& sol, const PathBundle& bundle,
                          const SwitchingCostMatrix& costs, int i0, double tol);

// 1e-9 * (1 + |Y| scale): boundary values are set exactly by the reflected
// scheme, so only roundoff slack is needed.
double default_switch_tol(const BackwardSolution& sol);

// Feedback decision rules, evaluable at fresh states.
class SwitchPolicy {
public:
  virtual ~SwitchPolicy() = default;
  // Mode to hold over [t_k, t_{k+1}) given the current mode at state x.
  virtual int decide(int k, double x, int current_mode, std::size_t path) const = 0;
  virtual std::string name() const = 0;
};

// Decision rule reconstructed from a solved field's regression surfaces;
// reproduces extract_strategy exactly on the paths the field was solved on.
class FeedbackPolicy final : public SwitchPolicy {
public:
  FeedbackPolicy(const BackwardSolution& sol, const ProblemSpec& spec, double tol);
  int decide(int k, double x, int current_mode, std::size_t path) const override;
  std::string name() const override { return "extracted"; }
  // Per-mode field values reconstructed at (t_k, x).
  void field_values(int k, double x, std::span<double> out) const;

private:
  const BackwardSolution* sol_;
  const ProblemSpec* spec_;
  double tol_;
};

class NeverSwitchPolicy final : public SwitchPolicy {
public:
  int decide(int, double, int current_mode, std::size_t) const override { return current_mode; }
  std::string name() const override { return "never-switch"; }
};

// Hops to the next mode (cyclically) at every step.
class AlwaysSwitchPolicy final : public SwitchPolicy {
public:
  explicit AlwaysSwitchPolicy(int n_modes) : n_modes_(n_modes) {}
  int decide(int, double, int current_mode, std::size_t) const override {
    return (current_mode + 1) % n_modes_;
  }
  std::string name() const override { return "always-switch"; }

private:
  int n_modes_;
};

// Fixed open-loop schedule: switch to `mode` at step `step`, independent of
// the state.
class ForcedSchedulePolicy final : public SwitchPolicy {
public:
  ForcedSchedulePolicy(std::vector<std::pair<int, int>> schedule, std::string label);
  int decide(int k, double, int current_mode, std::size_t) const override;
  std::string name() const override { return label_; }

private:
  std::vector<std::pair<int, int>> schedule_;  // (step, mode)
  std::string label_;
};

// Base policy with adapted random overrides: with probability prob the
// decision at (path, step) is replaced by a uniformly random mode. The coin
// uses its own counter-based stream, so it is independent of the Brownian
// draws and the perturbed strategy stays adapted.
class RandomPerturbationPolicy final : public SwitchPolicy {
public:
  RandomPerturbationPolicy(const SwitchPolicy& base, int n_modes, double prob,
                           std::uint64_t seed, std::string label);
  int decide(int k, double x, int current_mode, std::size_t path) const override;
  std::string name() const override { return label_; }

private:
  const SwitchPolicy* base_;
  int n_modes_;
  double prob_;
  std::uint64_t seed_;
  std::string label_;
};

// Applies the base rule with a stale step index (no decisions in the first
// `delay` steps), so switches fire late relative to the base policy.
class DelayedPolicy final : public SwitchPolicy {
public:
  DelayedPolicy(const SwitchPolicy& base, int delay, std::string label);
  int decide(int k, double x, int current_mode, std::size_t path) const override;
  std::string name() const override { return label_; }

private:
  const SwitchPolicy* base_;
  int delay_;
  std::string label_;
};

enum class Estimator { controlled_drift, girsanov };

struct PathProfitRecord {
  std::vector<SwitchEvent> switches;
  double payoff = 0.0;  // g + sum l dt - costs, unweighted
  double weight = 1.0;  // Girsanov weight (1 under the controlled estimator)
};

struct ProfitEstimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t n_paths = 0;
  double mean_weight = 1.0;  // girsanov estimator only
  double weight_se = 0.0;
  double mean_switches = 0.0;
  double mean_cost = 0.0;
  std::vector<std::size_t> switch_histogram;
};

// Monte Carlo estimate of J(policy) = E^alpha[ g(X_tau) + int l dt - total
// switching cost ]. The controlled-drift estimator simulates the dynamics
// induced by the measure change (drift sigma*b); the girsanov estimator
// simulates driftless paths and weights payoffs by exp(log-weight). The
// girsanov estimator is refused unless sigma_min and b_bound are declared.
ProfitEstimate estimate_profit(const ProblemSpec& spec, const SwitchPolicy& policy,
                               const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                               Estimator estimator,
                               std::vector<PathProfitRecord>* records = nullptr);

struct PerturbationSpec {
  enum class Kind { identity, never_switch, always_switch, forced, delayed, random };
  Kind kind = Kind::never_switch;
  int step = 0;          // forced
  int to_mode = 0;       // forced
  int delay = 1;         // delayed
  double prob = 0.1;     // random
  std::uint64_t seed = 0;
  std::string label;
};

struct PolicyCheckRow {
  std::string name;
  double j = 0.0;
  double se = 0.0;
  double slack = 0.0;  // j_star + 3*combined_se - j; >= 0 passes
  bool pass = false;
};

struct PolicyCheckReport {
  double j_star = 0.0;
  double se_star = 0.0;
  std::vector<PolicyCheckRow> rows;
  bool ok() const;
};

// Evaluates the extracted policy against perturbed strategies: every
// perturbation must satisfy J(alpha) <= J(alpha*) + 3 combined standard
// errors.
PolicyCheckReport policy_improvement_check(const ProblemSpec& spec, const BackwardSolution& sol,
                                           const TimeGrid& grid, std::size_t n_paths,
                                           std::uint64_t seed,
                                           std::span<const PerturbationSpec> perturbations,
                                           Estimator estimator = Estimator::controlled_drift);

}  // namespace obsw
