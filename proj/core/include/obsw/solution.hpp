#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "obsw/model.hpp"
#include "obsw/paths.hpp"
#include "obsw/regression.hpp"

namespace obsw {

enum class Scheme { penalized, reflected };

const char* to_string(Scheme) noexcept;

// Discrete-time backward fields on (mode, step, path). Step rows at and
// beyond the stopping index hold the frozen terminal data: Y = g(X_kappa),
// Z = 0, dK = 0. The per-(mode, step) regression fits are retained so a
// solved field can be evaluated at fresh states (feedback policies).
struct BackwardSolution {
  Scheme scheme = Scheme::reflected;
  int n_penalty = 0;  // 0 for the reflected scheme
  TimeGrid grid;
  int n_modes = 0;
  std::size_t n_paths = 0;
  int basis_degree = 0;

  std::vector<double> y;   // [i][k][p], k = 0..N
  std::vector<double> z;   // [i][k][p], row N is zero
  std::vector<double> dk;  // [i][k][p], row N is zero

  std::vector<double> y0;     // per-mode time-0 value (path average)
  std::vector<double> y0_se;  // standard error of that average

  std::vector<FittedPoly> cont_fit;  // [i][k], k = 0..N-1
  std::vector<FittedPoly> z_fit;     // [i][k], k = 0..N-1
  std::vector<std::uint8_t> fit_degenerate;  // per [i][k], 1 if a fallback fired

  std::size_t index(int i, int k, std::size_t p) const {
    return (static_cast<std::size_t>(i) * (grid.n_steps + 1) + k) * n_paths + p;
  }
  double value(int i, int k, std::size_t p) const { return y[index(i, k, p)]; }
  double zvalue(int i, int k, std::size_t p) const { return z[index(i, k, p)]; }
  double dkvalue(int i, int k, std::size_t p) const { return dk[index(i, k, p)]; }
  std::size_t fit_index(int i, int k) const {
    return static_cast<std::size_t>(i) * grid.n_steps + k;
  }

  double value_scale() const;  // max |Y|, used for relative tolerances
};

// One backward step at a single node: applies the driver over dt to the
// continuation values and then the scheme's constraint handling (penalty
// sum or oblique reflection). Shared by the solver loop and by feedback
// policies so both produce identical numbers at identical inputs.
void step_node_values(const ProblemSpec& spec, Scheme scheme, int n_penalty, double t, double dt,
                      std::span<const double> states, std::span<const double> cont,
                      std::span<const double> zest, std::span<double> y_out,
                      std::span<double> dk_out);

}  // namespace obsw
