#include "obsw/model.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace obsw {

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}
}  // namespace

SwitchingCostMatrix SwitchingCostMatrix::uniform(int d, double off_diagonal, bool strict) {
  SwitchingCostMatrix m;
  m.modes = d;
  m.strict = strict;
  m.c.assign(static_cast<std::size_t>(d) * d, off_diagonal);
  for (int i = 0; i < d; ++i) m.at(i, i) = 0.0;
  return m;
}

void ValidationReport::add(std::string hypothesis, std::string message) {
  items.push_back({std::move(hypothesis), std::move(message)});
}

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (const auto& it : items) os << "[" << it.hypothesis << "] " << it.message << "\n";
  for (const auto& v : cost_violations) {
    os << "[" << (v.strict ? "k'" : "3.1(ii)") << "] triple (" << v.i << "," << v.j << "," << v.l
       << "): C[" << v.i << "][" << v.j << "] + C[" << v.j << "][" << v.l << "] = " << fmt(v.lhs)
       << (v.strict ? " is not > " : " < ") << fmt(v.rhs) << "\n";
  }
  if (ok()) os << "all checks passed\n";
  return os.str();
}

ValidationReport validate_costs(const SwitchingCostMatrix& costs) {
  const int d = costs.modes;
  if (d < 1) raise(errc::structural, "cost matrix needs at least one mode");
  if (costs.c.size() != static_cast<std::size_t>(d) * d)
    raise(errc::structural, "cost matrix is not " + std::to_string(d) + "x" + std::to_string(d));

  ValidationReport report;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double v = costs(i, j);
      if (!(v >= 0.0))
        report.add("3.1(i)", "C[" + std::to_string(i + 1) + "][" + std::to_string(j + 1) +
                                 "] = " + fmt(v) + " is negative");
      if (i == j && v != 0.0)
        report.add("3.1", "diagonal entry C[" + std::to_string(i + 1) + "][" +
                              std::to_string(i + 1) + "] = " + fmt(v) + " must be zero");
    }
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (j == i) continue;
      for (int l = 0; l < d; ++l) {
        if (l == j) continue;
        const double lhs = costs(i, j) + costs(j, l);
        const double rhs = costs(i, l);
        if (lhs < rhs)
          report.cost_violations.push_back({i + 1, j + 1, l + 1, lhs, rhs, false});
        else if (costs.strict && !(lhs > rhs))
          report.cost_violations.push_back({i + 1, j + 1, l + 1, lhs, rhs, true});
      }
    }
  }
  return report;
}

double lemma_constant_cu(double u_max) {
  if (u_max == 0.0) return 0.0;
  return std::max(1.0, u_max + 5.0 * u_max * u_max);
}

LambdaWindow lambda_window(double mu1, double mu2, double u_max, double epsilon, double rho,
                           std::optional<double> cu_override) {
  if (!(epsilon > 0.0)) raise(errc::parameter, "epsilon must be positive");
  if (!(rho > 0.0) || !(rho < 1.0)) raise(errc::parameter, "rho must lie in (0,1)");
  if (!(u_max >= 0.0)) raise(errc::parameter, "u_max must be nonnegative");
  const double cu = cu_override.value_or(lemma_constant_cu(u_max));
  const double lower =
      cu / epsilon + 2.0 * mu2 * u_max + 2.0 / rho * u_max * u_max + 2.0 * epsilon;
  const double upper = -2.0 * mu1 - u_max;
  return {lower, upper};
}

bool validate_lambda_window(double mu1, double mu2, double u_max, double epsilon, double rho,
                            double lambda, std::optional<double> cu_override) {
  return lambda_window(mu1, mu2, u_max, epsilon, rho, cu_override).contains(lambda);
}

bool HorizonSpec::inside(double x) const {
  if (exit_lo && !(x > *exit_lo)) return false;
  if (exit_hi && !(x < *exit_hi)) return false;
  return true;
}

double HorizonSpec::tail_weight() const { return std::exp(lambda * t_cap); }

void ProblemSpec::finalize() {
  const int d = costs.modes;
  if (d < 1) raise(errc::structural, "problem needs at least one mode");
  if (initial_mode < 0 || initial_mode >= d)
    raise(errc::structural, "initial mode " + std::to_string(initial_mode + 1) +
                                " outside {1.." + std::to_string(d) + "}");
  if (coeffs.b.size() != static_cast<std::size_t>(d) ||
      coeffs.sigma.size() != static_cast<std::size_t>(d))
    raise(errc::structural, "b and sigma need one expression per mode");
  if (!coeffs.f.empty() && coeffs.f.size() != static_cast<std::size_t>(d))
    raise(errc::structural, "f needs one expression per mode");
  if (!coeffs.l.empty() && coeffs.l.size() != static_cast<std::size_t>(d))
    raise(errc::structural, "l needs one expression per mode");
  if (!(horizon.t_cap > 0.0)) raise(errc::parameter, "t_cap must be positive");
  if (horizon.n_steps < 1) raise(errc::parameter, "n_steps must be at least 1");
  if (horizon.exit_lo && horizon.exit_hi && !(*horizon.exit_lo < *horizon.exit_hi))
    raise(errc::parameter, "exit_lo must be below exit_hi");

  zero_ = Expr::constant(0.0);
  driver_.clear();
  sim_drift_.clear();
  if (switching()) {
    if (coeffs.l.empty() || coeffs.b.empty())
      raise(errc::specification, "switching mode requires l and b to be declared");
    driver_ = effective_driver(*this).f;
    for (int i = 0; i < d; ++i) sim_drift_.push_back(zero_);
  } else {
    if (coeffs.f.empty())
      raise(errc::specification, "general mode requires f to be declared");
    driver_ = coeffs.f;
    sim_drift_ = coeffs.b;
  }
  finalized_ = true;
}

const Expr& ProblemSpec::sim_drift(int i) const { return sim_drift_[static_cast<std::size_t>(i)]; }

double ProblemSpec::running_reward(double t, double x, int i) const {
  if (coeffs.l.empty())
    raise(errc::specification, "running reward l was not declared for this problem");
  return coeffs.l[static_cast<std::size_t>(i)].eval_tx(t, x);
}

CoefficientSpec effective_driver(const ProblemSpec& spec) {
  if (!spec.switching()) return spec.coeffs;
  if (spec.coeffs.l.empty() || spec.coeffs.b.empty())
    raise(errc::specification, "switching mode requires l and b to be declared");
  CoefficientSpec out = spec.coeffs;
  out.f.clear();
  const Expr z = Expr::variable('z');
  for (int i = 0; i < spec.num_modes(); ++i) {
    out.f.push_back(spec.coeffs.l[static_cast<std::size_t>(i)] +
                    z * spec.coeffs.b[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {
void check_mask(ValidationReport& rep, const Expr& e, std::uint8_t allowed, const char* role,
                int mode_1based) {
  const std::uint8_t bad = static_cast<std::uint8_t>(e.vars_used() & ~allowed);
  if (bad) {
    std::string where = role;
    if (mode_1based > 0) where += "[" + std::to_string(mode_1based) + "]";
    rep.add("H1", where + " references variable(s) {" + var_mask_names(bad) +
                      "} outside its permitted set {" + var_mask_names(allowed) + "}");
  }
}
}  // namespace

ValidationReport validate_problem(const ProblemSpec& spec) {
  if (!spec.finalized()) raise(errc::structural, "problem spec not finalized");
  ValidationReport rep = validate_costs(spec.costs);

  const int d = spec.num_modes();
  for (int i = 0; i < d; ++i) {
    check_mask(rep, spec.coeffs.b[i], kVarT | kVarX, "b", i + 1);
    check_mask(rep, spec.coeffs.sigma[i], kVarT | kVarX, "sigma", i + 1);
    if (!spec.coeffs.f.empty())
      check_mask(rep, spec.coeffs.f[i], kVarT | kVarX | kVarY | kVarZ, "f", i + 1);
    if (!spec.coeffs.l.empty()) check_mask(rep, spec.coeffs.l[i], kVarT | kVarX, "l", i + 1);
  }
  check_mask(rep, spec.coeffs.g, kVarX, "g", 0);

  const auto finite = [&](double v, const char* name) {
    if (!std::isfinite(v)) rep.add("H3", std::string(name) + " must be finite");
  };
  finite(spec.hyp.mu1, "mu1");
  finite(spec.hyp.mu2, "mu2");
  finite(spec.hyp.mu3, "mu3");
  finite(spec.hyp.k2, "k2");
  if (!(spec.hyp.u_max >= 0.0)) rep.add("H4", "u_max must be nonnegative");
  if (!(spec.hyp.epsilon > 0.0)) rep.add("(H6)", "epsilon must be positive");
  if (!(spec.hyp.rho > 0.0 && spec.hyp.rho < 1.0)) rep.add("(H6)", "rho must lie in (0,1)");

  if (spec.hyp.epsilon > 0.0 && spec.hyp.rho > 0.0 && spec.hyp.rho < 1.0 &&
      spec.hyp.u_max >= 0.0) {
    const LambdaWindow w = lambda_window(spec.hyp.mu1, spec.hyp.mu2, spec.hyp.u_max,
                                         spec.hyp.epsilon, spec.hyp.rho, spec.hyp.c_u_override);
    if (!w.contains(spec.horizon.lambda))
      rep.add("(H6)", "lambda = " + fmt(spec.horizon.lambda) + " outside the admissible window (" +
                          fmt(w.lower) + ", " + fmt(w.upper) + ")");
  }

  if (spec.switching()) {
    for (int i = 1; i < d; ++i) {
      if (!spec.coeffs.sigma[i].structurally_equal(spec.coeffs.sigma[0])) {
        rep.add("5.1(iv)", "sigma must be declared mode-independent in switching mode "
                           "(sigma[" + std::to_string(i + 1) + "] differs from sigma[1])");
        break;
      }
    }
    if (!spec.hyp.sigma_min || !(*spec.hyp.sigma_min > 0.0))
      rep.add("5.1(iv)", "switching mode requires a declared positive sigma_min floor");
    if (!spec.hyp.b_bound || !(*spec.hyp.b_bound >= 0.0))
      rep.add("5.1(v)", "switching mode requires a declared bound on b");
    if (spec.coeffs.l.empty()) rep.add("5.1", "switching mode requires l");
  }
  return rep;
}

}  // namespace obsw
