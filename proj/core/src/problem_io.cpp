#include "obsw/problem_io.hpp"

#include <fstream>

#include <json.hpp>

namespace obsw {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { raise(errc::specification, "problem document: " + msg); }

const json& need(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) bad(std::string("missing key '") + key + "'");
  return *it;
}

double need_number(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number()) bad(std::string("key '") + key + "' must be a number");
  return v.get<double>();
}

int need_int(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_integer()) bad(std::string("key '") + key + "' must be an integer");
  return v.get<int>();
}

Expr parse_coeff(const json& v, const char* role) {
  if (v.is_number()) return Expr::constant(v.get<double>());
  if (!v.is_string()) bad(std::string(role) + " entries must be expression strings");
  try {
    return Expr::parse(v.get<std::string>());
  } catch (const ParseError& e) {
    bad(std::string(role) + ": " + e.what());
  }
}

std::vector<Expr> parse_coeff_array(const json& coeffs, const char* key, int d, bool required) {
  auto it = coeffs.find(key);
  if (it == coeffs.end() || it->is_null()) {
    if (required) bad(std::string("coefficients.") + key + " is required");
    return {};
  }
  if (!it->is_array()) bad(std::string("coefficients.") + key + " must be an array or null");
  std::vector<Expr> out;
  if (it->size() == 1 && d > 1) {
    // single entry means mode-independent
    const Expr e = parse_coeff((*it)[0], key);
    out.assign(static_cast<std::size_t>(d), e);
    return out;
  }
  if (static_cast<int>(it->size()) != d)
    bad(std::string("coefficients.") + key + " needs " + std::to_string(d) + " entries");
  out.reserve(static_cast<std::size_t>(d));
  for (const json& v : *it) out.push_back(parse_coeff(v, key));
  return out;
}

}  // namespace

ProblemSpec load_problem_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("top level must be an object");

  ProblemSpec spec;
  const int d = need_int(j, "modes");
  if (d < 1) bad("modes must be >= 1");
  spec.x0 = need_number(j, "x0");
  spec.initial_mode = need_int(j, "i0") - 1;

  const json& costs = need(j, "costs");
  if (!costs.is_array() || static_cast<int>(costs.size()) != d * d)
    bad("costs must be a row-major array of modes*modes numbers");
  spec.costs.modes = d;
  spec.costs.c.reserve(costs.size());
  for (const json& v : costs) {
    if (!v.is_number()) bad("costs entries must be numbers");
    spec.costs.c.push_back(v.get<double>());
  }

  const json& horizon = need(j, "horizon");
  spec.horizon.t_cap = need_number(horizon, "t_cap");
  spec.horizon.n_steps = need_int(horizon, "n_steps");
  spec.horizon.lambda = need_number(horizon, "lambda");
  if (horizon.contains("exit_lo") && !horizon["exit_lo"].is_null())
    spec.horizon.exit_lo = horizon["exit_lo"].get<double>();
  if (horizon.contains("exit_hi") && !horizon["exit_hi"].is_null())
    spec.horizon.exit_hi = horizon["exit_hi"].get<double>();

  const json& mode = need(j, "application_mode");
  if (!mode.is_string()) bad("application_mode must be a string");
  const std::string mode_s = mode.get<std::string>();
  if (mode_s == "general")
    spec.mode = ApplicationMode::general;
  else if (mode_s == "switching")
    spec.mode = ApplicationMode::switching;
  else
    bad("application_mode must be 'general' or 'switching'");

  const json& coeffs = need(j, "coefficients");
  spec.coeffs.b = parse_coeff_array(coeffs, "b", d, true);
  spec.coeffs.sigma = parse_coeff_array(coeffs, "sigma", d, true);
  spec.coeffs.f = parse_coeff_array(coeffs, "f", d, false);
  spec.coeffs.l = parse_coeff_array(coeffs, "l", d, false);
  spec.coeffs.g = parse_coeff(need(coeffs, "g"), "g");
  if (spec.mode == ApplicationMode::switching && !spec.coeffs.f.empty())
    bad("switching mode constructs f from l and b; declare f as null");

  const json& hyp = need(j, "hypothesis");
  spec.hyp.mu1 = need_number(hyp, "mu1");
  spec.hyp.mu2 = need_number(hyp, "mu2");
  spec.hyp.mu3 = need_number(hyp, "mu3");
  spec.hyp.k2 = need_number(hyp, "k2");
  spec.hyp.u_max = need_number(hyp, "u_max");
  spec.hyp.epsilon = need_number(hyp, "epsilon");
  spec.hyp.rho = need_number(hyp, "rho");
  const json& strict = need(hyp, "strict_costs");
  if (!strict.is_boolean()) bad("hypothesis.strict_costs must be a boolean");
  spec.hyp.strict_costs = strict.get<bool>();
  spec.costs.strict = spec.hyp.strict_costs;
  if (hyp.contains("sigma_min") && !hyp["sigma_min"].is_null())
    spec.hyp.sigma_min = hyp["sigma_min"].get<double>();
  if (hyp.contains("b_bound") && !hyp["b_bound"].is_null())
    spec.hyp.b_bound = hyp["b_bound"].get<double>();
  if (hyp.contains("c_u_override") && !hyp["c_u_override"].is_null())
    spec.hyp.c_u_override = hyp["c_u_override"].get<double>();

  spec.finalize();
  return spec;
}

ProblemSpec load_problem(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(errc::io, "cannot open problem document " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_problem_text(text);
}

std::string problem_to_json(const ProblemSpec& spec) {
  json j;
  const int d = spec.num_modes();
  j["modes"] = d;
  j["x0"] = spec.x0;
  j["i0"] = spec.initial_mode + 1;
  j["costs"] = spec.costs.c;
  json horizon;
  horizon["t_cap"] = spec.horizon.t_cap;
  horizon["n_steps"] = spec.horizon.n_steps;
  horizon["lambda"] = spec.horizon.lambda;
  if (spec.horizon.exit_lo) horizon["exit_lo"] = *spec.horizon.exit_lo;
  if (spec.horizon.exit_hi) horizon["exit_hi"] = *spec.horizon.exit_hi;
  j["horizon"] = horizon;
  json coeffs;
  const auto exprs = [](const std::vector<Expr>& v) {
    json arr = json::array();
    for (const Expr& e : v) arr.push_back(e.str());
    return arr;
  };
  coeffs["b"] = exprs(spec.coeffs.b);
  coeffs["sigma"] = exprs(spec.coeffs.sigma);
  coeffs["f"] = spec.coeffs.f.empty() ? json() : exprs(spec.coeffs.f);
  coeffs["l"] = spec.coeffs.l.empty() ? json() : exprs(spec.coeffs.l);
  coeffs["g"] = spec.coeffs.g.str();
  j["coefficients"] = coeffs;
  json hyp;
  hyp["mu1"] = spec.hyp.mu1;
  hyp["mu2"] = spec.hyp.mu2;
  hyp["mu3"] = spec.hyp.mu3;
  hyp["k2"] = spec.hyp.k2;
  hyp["u_max"] = spec.hyp.u_max;
  hyp["epsilon"] = spec.hyp.epsilon;
  hyp["rho"] = spec.hyp.rho;
  hyp["strict_costs"] = spec.hyp.strict_costs;
  if (spec.hyp.sigma_min) hyp["sigma_min"] = *spec.hyp.sigma_min;
  if (spec.hyp.b_bound) hyp["b_bound"] = *spec.hyp.b_bound;
  if (spec.hyp.c_u_override) hyp["c_u_override"] = *spec.hyp.c_u_override;
  j["hypothesis"] = hyp;
  j["application_mode"] = spec.switching() ? "switching" : "general";
  return j.dump(2);
}

}  // namespace obsw
