#pragma once

#include <filesystem>
#include <string>

#include "obsw/model.hpp"

namespace obsw {

// Problem document schema (JSON): modes, x0, i0, costs (row-major),
// horizon {t_cap, n_steps, exit_lo?, exit_hi?, lambda},
// coefficients {b:[...], sigma:[...], f:[...]|null, l:[...]|null, g:...},
// hypothesis {mu1, mu2, mu3, k2, u_max, epsilon, rho, strict_costs,
//             sigma_min?, b_bound?, c_u_override?},
// application_mode ("general"|"switching").
ProblemSpec load_problem_text(const std::string& json_text);
ProblemSpec load_problem(const std::filesystem::path& file);

std::string problem_to_json(const ProblemSpec& spec);  // canonical re-serialization

}  // namespace obsw
