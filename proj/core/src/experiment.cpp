#include "obsw/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "obsw/lattice.hpp"
#include "obsw/penalized.hpp"
#include "obsw/problem_io.hpp"
#include "obsw/reflected.hpp"
#include "obsw/version.hpp"

namespace obsw {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

TimeGrid ExperimentConfig::paired_grid(int n_penalty) const {
  // smallest N with n*t_cap/N <= 0.5
  const int steps = std::max(1, static_cast<int>(std::ceil(2.0 * n_penalty * problem.horizon.t_cap)));
  return TimeGrid::uniform(problem.horizon.t_cap, steps);
}

TimeGrid ExperimentConfig::solve_grid() const {
  return TimeGrid::uniform(problem.horizon.t_cap, problem.horizon.n_steps);
}

void ExperimentConfig::check_invariants() const {
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (ladder[i] < 1) raise(errc::parameter, "penalty ladder entries must be positive");
    if (i > 0 && ladder[i] <= ladder[i - 1])
      raise(errc::parameter, "penalty ladder must be strictly increasing");
  }
  if (degree < 0 || degree > kMaxBasisDegree)
    raise(errc::parameter, "basis degree must lie in [0, 7]");
  if (n_paths < 2) raise(errc::parameter, "need at least 2 paths");
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& config_file) {
  std::ifstream in(config_file);
  if (!in) raise(errc::io, "cannot open config " + config_file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(errc::specification, std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  json problem_json;
  if (j.contains("problem") && j["problem"].is_string()) {
    // reference to a separate problem document, relative to the config file
    const std::filesystem::path ref =
        config_file.parent_path() / j["problem"].get<std::string>();
    cfg.problem = load_problem(ref);
  } else if (j.contains("problem") && j["problem"].is_object()) {
    cfg.problem = load_problem_text(j["problem"].dump());
  } else {
    // the config file is itself a problem document
    cfg.problem = load_problem_text(text);
  }
  cfg.canonical_problem = problem_to_json(cfg.problem);

  const json run = j.value("run", json::object());
  cfg.seed = run.value("seed", cfg.seed);
  cfg.n_paths = run.value("n_paths", cfg.n_paths);
  if (run.contains("ladder")) cfg.ladder = run["ladder"].get<std::vector<int>>();
  cfg.degree = run.value("degree", cfg.degree);
  cfg.oracle_n = run.value("oracle_n", cfg.oracle_n);
  cfg.random_perturbations = run.value("random_perturbations", cfg.random_perturbations);
  if (run.contains("out_dir")) cfg.out_dir = run["out_dir"].get<std::string>();
  cfg.check_invariants();
  return cfg;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal CSV emitter with fixed float formatting so identical runs produce
// identical bytes.
class Csv {
public:
  Csv(const std::filesystem::path& file, const std::string& header) : out_(file) {
    if (!out_) raise(errc::io, "cannot open " + file.string() + " for writing");
    out_ << header << "\n";
  }
  Csv& field(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  Csv& field(double v) { return field(fmt(v)); }
  Csv& field(int v) { return field(std::to_string(v)); }
  Csv& field(std::size_t v) { return field(std::to_string(v)); }
  void endrow() {
    out_ << "\n";
    first_ = true;
  }

private:
  void sep() {
    if (!first_) out_ << ",";
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
};

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical_problem)));
  m["config_hash"] = hash;
  m["seed"] = cfg.seed;
  m["n_paths"] = cfg.n_paths;
  m["ladder"] = cfg.ladder;
  m["degree"] = cfg.degree;
  m["oracle_n"] = cfg.effective_oracle_n();
  m["artifacts"] = artifacts;
  m["tail_weight"] = cfg.problem.horizon.tail_weight();
  std::ofstream out(cfg.out_dir / ("manifest_" + command + ".json"));
  if (!out) raise(errc::io, "cannot write manifest");
  out << m.dump(2) << "\n";
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) raise(errc::io, "cannot create output directory " + cfg.out_dir.string());
}

int classify(const Error& e) {
  switch (e.kind()) {
    case errc::unsupported: return kExitOracleRefusal;
    case errc::io: return kExitIoError;
    default: return kExitSolverError;
  }
}

struct LadderEntry {
  int n_penalty = 0;
  TimeGrid grid;
  BackwardSolution sol;
  PenaltyViolationReport violation;
  double domain = 0.0;
  double skorokhod = 0.0;
  double gap_next = std::numeric_limits<double>::quiet_NaN();  // vs next ladder entry
};

// Solves the penalty ladder: each entry on its paired grid, and each adjacent
// pair re-solved on the finer paired grid to give a same-bundle Cauchy gap.
std::vector<LadderEntry> solve_ladder(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<LadderEntry> entries;
  for (std::size_t li = 0; li < cfg.ladder.size(); ++li) {
    LadderEntry e;
    e.n_penalty = cfg.ladder[li];
    e.grid = cfg.paired_grid(e.n_penalty);
    const PathBundle bundle = simulate_forward(cfg.problem, e.grid, cfg.n_paths, cfg.seed);
    e.sol = solve_penalized(bundle, cfg.problem, e.grid, e.n_penalty, cfg.degree);
    e.violation = penalty_violation_norm(e.sol, cfg.problem.costs, cfg.problem.horizon.lambda);
    e.domain = domain_violation(e.sol, cfg.problem.costs);
    e.skorokhod = skorokhod_residual(e.sol, cfg.problem.costs);
    log << "  penalized n=" << e.n_penalty << " (N=" << e.grid.n_steps << "): Y0 =";
    for (double v : e.sol.y0) log << " " << v;
    log << "\n";
    entries.push_back(std::move(e));
  }
  for (std::size_t li = 0; li + 1 < entries.size(); ++li) {
    const TimeGrid fine = entries[li + 1].grid;
    const PathBundle bundle = simulate_forward(cfg.problem, fine, cfg.n_paths, cfg.seed);
    const BackwardSolution coarse =
        solve_penalized(bundle, cfg.problem, fine, entries[li].n_penalty, cfg.degree);
    entries[li].gap_next =
        cauchy_gap(coarse, entries[li + 1].sol, cfg.problem.horizon.lambda);
  }
  return entries;
}

void write_diagnostics_csv(const std::filesystem::path& file, const BackwardSolution& sol,
                           const SwitchingCostMatrix& costs) {
  Csv csv(file, "scheme,mode,k,domain_violation,skorokhod_residual");
  for (int i = 0; i < sol.n_modes; ++i) {
    const auto dv = domain_violation_by_step(sol, costs, i);
    const auto sk = skorokhod_residual_by_step(sol, costs, i);
    for (int k = 0; k <= sol.grid.n_steps; ++k) {
      csv.field(std::string(to_string(sol.scheme)))
          .field(i + 1)
          .field(k)
          .field(dv[static_cast<std::size_t>(k)])
          .field(sk[static_cast<std::size_t>(k)]);
      csv.endrow();
    }
  }
}

}  // namespace

int run_validate(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_out_dir(cfg);
  const ValidationReport rep = validate_problem(cfg.problem);
  log << rep.str();
  std::ofstream out(cfg.out_dir / "validation.txt");
  out << rep.str();
  write_manifest(cfg, "validate", {"validation.txt"});
  return rep.ok() ? kExitOk : kExitValidationFailed;
}

int run_solve(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_out_dir(cfg);
  {
    const ValidationReport rep = validate_problem(cfg.problem);
    if (!rep.ok()) {
      log << rep.str();
      return kExitValidationFailed;
    }
  }
  try {
    const TimeGrid grid = cfg.solve_grid();
    const PathBundle bundle = simulate_forward(cfg.problem, grid, cfg.n_paths, cfg.seed);
    if (cfg.dump_paths_flag) dump_paths(bundle, cfg.out_dir / "paths.bin");

    const BackwardSolution refl = solve_reflected(bundle, cfg.problem, grid, cfg.degree);
    log << "reflected (N=" << grid.n_steps << "): Y0 =";
    for (double v : refl.y0) log << " " << v;
    log << "\n";

    const std::vector<LadderEntry> ladder = solve_ladder(cfg, log);

    {
      Csv csv(cfg.out_dir / "values.csv",
              "mode,reflected_y0,reflected_se,penalized_y0,penalized_se,penalty_n");
      const LadderEntry* last = ladder.empty() ? nullptr : &ladder.back();
      for (int i = 0; i < cfg.problem.num_modes(); ++i) {
        csv.field(i + 1).field(refl.y0[i]).field(refl.y0_se[i]);
        if (last)
          csv.field(last->sol.y0[i]).field(last->sol.y0_se[i]).field(last->n_penalty);
        else
          csv.field(std::string()).field(std::string()).field(std::string());
        csv.endrow();
      }
    }
    {
      Csv csv(cfg.out_dir / "ladder.csv",
              "n,steps,mode,y0,y0_se,violation_sup,violation_integrated_n2,domain_violation,"
              "skorokhod_residual,cauchy_gap_next");
      for (const LadderEntry& e : ladder) {
        for (int i = 0; i < cfg.problem.num_modes(); ++i) {
          csv.field(e.n_penalty)
              .field(e.grid.n_steps)
              .field(i + 1)
              .field(e.sol.y0[i])
              .field(e.sol.y0_se[i])
              .field(e.violation.sup_violation)
              .field(e.violation.integrated_n2)
              .field(e.domain)
              .field(e.skorokhod);
          if (std::isnan(e.gap_next))
            csv.field(std::string());
          else
            csv.field(e.gap_next);
          csv.endrow();
        }
      }
    }
    write_diagnostics_csv(cfg.out_dir / "diagnostics.csv", refl, cfg.problem.costs);
    if (!ladder.empty())
      write_diagnostics_csv(cfg.out_dir / "diagnostics_penalized.csv", ladder.back().sol,
                            cfg.problem.costs);

    std::vector<std::string> artifacts = {"values.csv", "ladder.csv", "diagnostics.csv"};
    if (!ladder.empty()) artifacts.push_back("diagnostics_penalized.csv");
    if (cfg.dump_paths_flag) artifacts.push_back("paths.bin");
    write_manifest(cfg, "solve", artifacts);
    return kExitOk;
  } catch (const Error& e) {
    log << e.what() << "\n";
    return classify(e);
  }
}

int run_oracle(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_out_dir(cfg);
  try {
    const int n = cfg.effective_oracle_n();
    const LatticeModel lat = dp_solve(cfg.problem, n);
    Csv csv(cfg.out_dir / "oracle.csv", "step,node,mode,x,value");
    for (int k = 0; k <= n; ++k)
      for (int m = 0; m <= k; ++m)
        for (int i = 0; i < lat.n_modes; ++i) {
          csv.field(k).field(m).field(i + 1).field(lat.node_state(k, m)).field(
              lat.value_at(i, k, m));
          csv.endrow();
        }
    log << "lattice dp (N=" << n << "): V0 =";
    for (int i = 0; i < lat.n_modes; ++i) log << " " << lat.value_at(i, 0, 0);
    log << "\n";
    write_manifest(cfg, "oracle", {"oracle.csv"});
    return kExitOk;
  } catch (const Error& e) {
    log << e.what() << "\n";
    return classify(e);
  }
}

int run_compare(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_out_dir(cfg);
  {
    const ValidationReport rep = validate_problem(cfg.problem);
    if (!rep.ok()) {
      log << rep.str();
      return kExitValidationFailed;
    }
  }
  try {
    const TimeGrid grid = cfg.solve_grid();
    const PathBundle bundle = simulate_forward(cfg.problem, grid, cfg.n_paths, cfg.seed);
    const BackwardSolution refl = solve_reflected(bundle, cfg.problem, grid, cfg.degree);

    const int max_n = cfg.ladder.empty() ? 0 : cfg.ladder.back();
    BackwardSolution pen;
    if (max_n > 0) {
      const TimeGrid pgrid = cfg.paired_grid(max_n);
      const PathBundle pbundle = simulate_forward(cfg.problem, pgrid, cfg.n_paths, cfg.seed);
      pen = solve_penalized(pbundle, cfg.problem, pgrid, max_n, cfg.degree);
    }

    const int oracle_n = cfg.effective_oracle_n();
    const LatticeModel lat = dp_solve(cfg.problem, oracle_n);
    const double dp0 = lat.value_at(cfg.problem.initial_mode, 0, 0);

    double enum_value = std::numeric_limits<double>::quiet_NaN();
    if (oracle_n <= kMaxEnumerationSteps && cfg.problem.num_modes() <= kMaxEnumerationModes)
      enum_value = enumerate_strategies(cfg.problem, oracle_n, kMaxEnumerationModes).value;

    const FeedbackPolicy policy(refl, cfg.problem, default_switch_tol(refl));
    const ProfitEstimate j_ctrl = estimate_profit(cfg.problem, policy, grid, cfg.n_paths,
                                                  cfg.seed + 1, Estimator::controlled_drift);
    ProfitEstimate j_girs;
    bool have_girs = false;
    try {
      j_girs = estimate_profit(cfg.problem, policy, grid, cfg.n_paths, cfg.seed + 1,
                               Estimator::girsanov);
      have_girs = true;
    } catch (const Error& e) {
      log << "girsanov estimator unavailable: " << e.what() << "\n";
    }

    const int i0 = cfg.problem.initial_mode;
    Csv csv(cfg.out_dir / "compare.csv", "method,value,se,abs_diff_vs_dp,rel_diff_vs_dp");
    const auto row = [&](const std::string& name, double v, double se) {
      const double diff = std::fabs(v - dp0);
      csv.field(name).field(v).field(se).field(diff).field(
          dp0 != 0.0 ? diff / std::fabs(dp0) : diff);
      csv.endrow();
      log << "  " << name << " = " << v << " (se " << se << ")\n";
    };
    row("lattice_dp", dp0, 0.0);
    if (!std::isnan(enum_value)) row("enumeration", enum_value, 0.0);
    row("reflected_mc", refl.y0[i0], refl.y0_se[i0]);
    if (max_n > 0) row("penalized_mc_n" + std::to_string(max_n), pen.y0[i0], pen.y0_se[i0]);
    row("j_controlled_drift", j_ctrl.value, j_ctrl.se);
    if (have_girs) row("j_girsanov", j_girs.value, j_girs.se);

    write_manifest(cfg, "compare", {"compare.csv"});
    return kExitOk;
  } catch (const Error& e) {
    log << e.what() << "\n";
    return classify(e);
  }
}

int run_policy(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_out_dir(cfg);
  {
    const ValidationReport rep = validate_problem(cfg.problem);
    if (!rep.ok()) {
      log << rep.str();
      return kExitValidationFailed;
    }
  }
  try {
    const TimeGrid grid = cfg.solve_grid();
    const PathBundle bundle = simulate_forward(cfg.problem, grid, cfg.n_paths, cfg.seed);
    const BackwardSolution refl = solve_reflected(bundle, cfg.problem, grid, cfg.degree);
    const double tol = default_switch_tol(refl);

    const Strategy strat =
        extract_strategy(refl, bundle, cfg.problem.costs, cfg.problem.initial_mode, tol);
    const StrategyValue u0 = solve_strategy_bsde(bundle, cfg.problem, strat, grid, cfg.degree);
    log << "extracted strategy: mean switches = "
        << static_cast<double>(strat.total_switches()) / static_cast<double>(strat.n_paths)
        << ", U(0) = " << u0.value << " vs Y0 = " << refl.y0[cfg.problem.initial_mode] << "\n";

    const FeedbackPolicy policy(refl, cfg.problem, tol);
    std::vector<PathProfitRecord> records;
    const ProfitEstimate est = estimate_profit(cfg.problem, policy, grid, cfg.n_paths,
                                               cfg.seed + 1, Estimator::controlled_drift,
                                               &records);
    {
      std::ofstream out(cfg.out_dir / "strategies.jsonl");
      if (!out) raise(errc::io, "cannot write strategies.jsonl");
      for (std::size_t p = 0; p < records.size(); ++p) {
        json rec;
        rec["path"] = p;
        json sw = json::array();
        for (const SwitchEvent& s : records[p].switches)
          sw.push_back({{"k", s.step}, {"from", s.from + 1}, {"to", s.to + 1}});
        rec["switches"] = sw;
        rec["profit"] = records[p].payoff;
        out << rec.dump() << "\n";
      }
    }
    {
      Csv csv(cfg.out_dir / "policy_summary.csv",
              "j,se,n_paths,mean_switches,mean_cost,u0_bsde,u0_se,y0");
      csv.field(est.value)
          .field(est.se)
          .field(est.n_paths)
          .field(est.mean_switches)
          .field(est.mean_cost)
          .field(u0.value)
          .field(u0.se)
          .field(refl.y0[cfg.problem.initial_mode]);
      csv.endrow();
    }
    {
      Csv csv(cfg.out_dir / "switch_histogram.csv", "switches,paths");
      for (std::size_t c = 0; c < est.switch_histogram.size(); ++c) {
        csv.field(c).field(est.switch_histogram[c]);
        csv.endrow();
      }
    }

    std::vector<PerturbationSpec> perts;
    perts.push_back({PerturbationSpec::Kind::never_switch, 0, 0, 1, 0.1, 0, "never-switch"});
    perts.push_back({PerturbationSpec::Kind::always_switch, 0, 0, 1, 0.1, 0, "always-switch"});
    for (int r = 0; r < cfg.random_perturbations; ++r)
      perts.push_back({PerturbationSpec::Kind::random, 0, 0, 1, 0.15,
                       cfg.seed + 100 + static_cast<std::uint64_t>(r),
                       "random-" + std::to_string(r + 1)});
    const PolicyCheckReport checks = policy_improvement_check(
        cfg.problem, refl, grid, cfg.n_paths, cfg.seed + 1, perts);
    {
      Csv csv(cfg.out_dir / "policy_checks.csv", "name,j,se,j_star,se_star,slack,pass");
      for (const PolicyCheckRow& r : checks.rows) {
        csv.field(r.name)
            .field(r.j)
            .field(r.se)
            .field(checks.j_star)
            .field(checks.se_star)
            .field(r.slack)
            .field(std::string(r.pass ? "1" : "0"));
        csv.endrow();
      }
    }
    log << "policy improvement check: " << (checks.ok() ? "pass" : "FAIL") << "\n";

    write_manifest(cfg, "policy",
                   {"strategies.jsonl", "policy_summary.csv", "switch_histogram.csv",
                    "policy_checks.csv"});
    return kExitOk;
  } catch (const Error& e) {
    log << e.what() << "\n";
    return classify(e);
  }
}

}  // namespace obsw
