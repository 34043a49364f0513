#pragma once

#include <optional>
#include <string>
#include <vector>

#include "obsw/expr.hpp"

namespace obsw {

// Switching-cost matrix over the mode set {1..d}. All validator output uses
// 1-based mode labels to match the problem document.
struct SwitchingCostMatrix {
  int modes = 0;
  std::vector<double> c;  // row-major, modes*modes
  bool strict = false;    // request the strict triangle inequality

  double operator()(int i, int j) const { return c[static_cast<std::size_t>(i) * modes + j]; }
  double& at(int i, int j) { return c[static_cast<std::size_t>(i) * modes + j]; }

  static SwitchingCostMatrix uniform(int d, double off_diagonal, bool strict = false);
};

struct CostTripleViolation {
  int i, j, l;  // 1-based
  double lhs;   // C[i][j] + C[j][l]
  double rhs;   // C[i][l]
  bool strict;  // violated the strict form only
};

struct ValidationItem {
  std::string hypothesis;  // e.g. "3.1(i)", "k'", "(H6)", "5.1(iv)"
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  std::vector<CostTripleViolation> cost_violations;

  bool ok() const { return items.empty() && cost_violations.empty(); }
  void add(std::string hypothesis, std::string message);
  std::string str() const;
};

// Hypothesis 3.1 (and k' when strict): nonnegativity, zero diagonal, triangle
// inequality over all triples (i,j,l) with i != j, j != l.
ValidationReport validate_costs(const SwitchingCostMatrix& costs);

// Documented instantiation of the a-priori-estimate constant C_u. Vanishes
// for u == 0 (the driver comparison terms all carry a factor of u).
double lemma_constant_cu(double u_max);

struct LambdaWindow {
  double lower, upper;  // admissible open interval (lower, upper)
  bool contains(double lambda) const { return lower < lambda && lambda < upper; }
  bool empty() const { return !(lower < upper); }
};

LambdaWindow lambda_window(double mu1, double mu2, double u_max, double epsilon, double rho,
                           std::optional<double> cu_override = std::nullopt);

// True iff eps^-1*C_u + 2*mu2*u_max + 2*rho^-1*u_max^2 + 2*eps < lambda
//          < -2*mu1 - u_max.
bool validate_lambda_window(double mu1, double mu2, double u_max, double epsilon, double rho,
                            double lambda, std::optional<double> cu_override = std::nullopt);

struct HypothesisParams {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double mu3 = 0.0;
  double k2 = 0.0;
  double u_max = 0.0;
  double epsilon = 1.0;
  double rho = 0.5;
  bool strict_costs = false;
  std::optional<double> sigma_min;      // 5.1(iv) declared floor on |sigma|
  std::optional<double> b_bound;        // 5.1(v) declared bound on |b|
  std::optional<double> c_u_override;   // overrides lemma_constant_cu
};

enum class ApplicationMode { general, switching };

// Per-mode coefficient expressions. Variable masks: b, sigma, l over {t,x};
// f over {t,x,y,z}; g over {x}-only.
struct CoefficientSpec {
  std::vector<Expr> b;
  std::vector<Expr> sigma;
  std::vector<Expr> f;  // empty when not declared
  std::vector<Expr> l;  // empty when not declared
  Expr g;
};

struct HorizonSpec {
  double t_cap = 1.0;
  int n_steps = 1;
  std::optional<double> exit_lo;
  std::optional<double> exit_hi;
  double lambda = 0.0;  // diagnostic discount rate

  bool has_exit() const { return exit_lo.has_value() || exit_hi.has_value(); }
  bool inside(double x) const;
  // Tail-weight diagnostic exp(lambda * t_cap) for judging the truncation.
  double tail_weight() const;
};

class ProblemSpec {
public:
  double x0 = 0.0;
  int initial_mode = 0;  // 0-based
  SwitchingCostMatrix costs;
  CoefficientSpec coeffs;
  HorizonSpec horizon;
  HypothesisParams hyp;
  ApplicationMode mode = ApplicationMode::general;

  // Builds derived drivers and checks structure; must be called after the
  // public fields are filled (problem_io does this for JSON documents).
  void finalize();

  int num_modes() const { return costs.modes; }
  bool switching() const { return mode == ApplicationMode::switching; }

  // Dynamics used by the Monte Carlo pipeline: in switching mode the solve
  // runs under the reference (driftless) measure with the drift folded into
  // the driver, matching the lattice oracle.
  const Expr& sim_drift(int i) const;
  const Expr& declared_drift(int i) const { return coeffs.b[static_cast<std::size_t>(i)]; }
  const Expr& sigma_expr(int i) const { return coeffs.sigma[static_cast<std::size_t>(i)]; }
  const Expr& driver_expr(int i) const { return driver_[static_cast<std::size_t>(i)]; }

  double drift(double t, double x, int i) const { return declared_drift(i).eval_tx(t, x); }
  double diffusion(double t, double x, int i) const { return sigma_expr(i).eval_tx(t, x); }
  double driver(double t, double x, double y, double z, int i) const {
    return driver_expr(i).eval(t, x, y, z);
  }
  double running_reward(double t, double x, int i) const;
  double terminal(double x) const { return coeffs.g.eval(0.0, x, 0.0, 0.0); }

  bool finalized() const { return finalized_; }

private:
  std::vector<Expr> driver_;     // f in general mode, l + z*b in switching mode
  std::vector<Expr> sim_drift_;  // b in general mode, 0 in switching mode
  Expr zero_;
  bool finalized_ = false;
};

// Coefficients under the switching construction: f(t,x,z,i) := l + z*b,
// independent of y. General mode returns the input unchanged.
CoefficientSpec effective_driver(const ProblemSpec& spec);

// Everything cmd_validate runs: cost hypotheses, the (H6) lambda window at
// the declared horizon lambda, expression variable masks, finiteness of the
// declared constants, and the switching-mode coefficient requirements.
ValidationReport validate_problem(const ProblemSpec& spec);

}  // namespace obsw
