// obsw: solver front end for multi-mode reflected backward systems and the
// associated optimal switching pipeline.
//
// Subcommands: validate | solve | oracle | compare | policy
// Shared flags: --config PATH, --seed U64, --paths U32, --out DIR
// Worker threads are capped by the OBSW_THREADS environment variable.

#include <iostream>

#include <CLI11.hpp>

#include "obsw/experiment.hpp"
#include "obsw/version.hpp"

namespace {

struct CliOptions {
  std::string config;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::uint32_t paths = 0;
  std::vector<int> ladder;
  int degree = -1;
  int oracle_n = 0;
  bool dump_paths = false;
};

obsw::ExperimentConfig build_config(const CliOptions& opt) {
  obsw::ExperimentConfig cfg = obsw::ExperimentConfig::from_file(opt.config);
  if (opt.seed_set) cfg.seed = opt.seed;
  if (opt.paths > 0) cfg.n_paths = opt.paths;
  if (!opt.ladder.empty()) cfg.ladder = opt.ladder;
  if (opt.degree >= 0) cfg.degree = opt.degree;
  if (opt.oracle_n > 0) cfg.oracle_n = opt.oracle_n;
  cfg.dump_paths_flag = opt.dump_paths;
  cfg.out_dir = opt.out_dir;
  cfg.check_invariants();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"obsw: reflected backward systems and optimal switching"};
  app.set_version_flag("--version", obsw::kVersion);
  app.require_subcommand(1);

  CliOptions opt;
  const auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "problem/config JSON document")->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", opt.seed, "RNG seed")->each([&](const std::string&) {
      opt.seed_set = true;
    });
    sub->add_option("--paths", opt.paths, "Monte Carlo path count");
    sub->add_option("--ladder", opt.ladder, "penalty ladder (strictly increasing)");
    sub->add_option("--degree", opt.degree, "regression basis degree");
    sub->add_option("--oracle-n", opt.oracle_n, "lattice oracle step count");
    sub->add_flag("--dump-paths", opt.dump_paths, "dump the simulated path bundle");
  };

  CLI::App* validate = app.add_subcommand("validate", "check the problem document hypotheses");
  CLI::App* solve = app.add_subcommand("solve", "reflected + penalty-ladder solves");
  CLI::App* oracle = app.add_subcommand("oracle", "exact lattice dynamic programming");
  CLI::App* compare = app.add_subcommand("compare", "cross-method comparison table");
  CLI::App* policy = app.add_subcommand("policy", "extract and evaluate the switching strategy");
  for (CLI::App* sub : {validate, solve, oracle, compare, policy}) add_shared(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    const obsw::ExperimentConfig cfg = build_config(opt);
    if (validate->parsed()) return obsw::run_validate(cfg, std::cout);
    if (solve->parsed()) return obsw::run_solve(cfg, std::cout);
    if (oracle->parsed()) return obsw::run_oracle(cfg, std::cout);
    if (compare->parsed()) return obsw::run_compare(cfg, std::cout);
    if (policy->parsed()) return obsw::run_policy(cfg, std::cout);
  } catch (const obsw::Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.kind()) {
      case obsw::errc::io: return obsw::kExitIoError;
      case obsw::errc::unsupported: return obsw::kExitOracleRefusal;
      case obsw::errc::specification:
      case obsw::errc::structural:
      case obsw::errc::parameter: return obsw::kExitUsage;
      default: return obsw::kExitSolverError;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return obsw::kExitSolverError;
  }
  return obsw::kExitUsage;
}
