#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "obsw/model.hpp"
#include "obsw/paths.hpp"
#include "obsw/switching.hpp"

namespace obsw {

// Exit codes shared by the library entry points and the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitValidationFailed = 2,
  kExitSolverError = 3,
  kExitOracleRefusal = 4,
  kExitIoError = 5,
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::string canonical_problem;  // canonical problem JSON, hashed into the manifest

  std::uint64_t seed = 1;
  std::size_t n_paths = 100000;
  std::vector<int> ladder = {10, 20, 40};  // penalty levels, strictly increasing
  int degree = 2;
  int oracle_n = 0;          // 0: use horizon.n_steps
  int random_perturbations = 5;
  bool dump_paths_flag = false;
  std::filesystem::path out_dir = "out";

  static ExperimentConfig from_file(const std::filesystem::path& config_file);

  // Grid paired with a penalty level so that n*dt <= 0.5.
  TimeGrid paired_grid(int n_penalty) const;
  TimeGrid solve_grid() const;
  int effective_oracle_n() const { return oracle_n > 0 ? oracle_n : problem.horizon.n_steps; }
  void check_invariants() const;
};

std::uint64_t fnv1a64(std::string_view bytes);

// Orchestration entry points; each writes a manifest plus its artifacts under
// cfg.out_dir and returns an ExitCode. Log output goes to `log`.
int run_validate(const ExperimentConfig& cfg, std::ostream& log);
int run_solve(const ExperimentConfig& cfg, std::ostream& log);
int run_oracle(const ExperimentConfig& cfg, std::ostream& log);
int run_compare(const ExperimentConfig& cfg, std::ostream& log);
int run_policy(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace obsw
