#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace obsw {

inline constexpr int kMaxBasisDegree = 7;

// Least-squares polynomial fit in a single state variable. States are
// centered and scaled before the monomial basis is formed; coefficients are
// stored in the normalized variable u = (x - shift) / scale.
struct FittedPoly {
  int degree = 0;            // effective degree after any fallback
  int requested_degree = 0;  // what the caller asked for
  double shift = 0.0;
  double scale = 1.0;
  std::array<double, kMaxBasisDegree + 1> coeff{};

  double operator()(double x) const {
    const double u = (x - shift) / scale;
    double acc = coeff[degree];
    for (int j = degree - 1; j >= 0; --j) acc = acc * u + coeff[j];
    return acc;
  }

  bool degenerate() const { return degree < requested_degree; }
};

// Projection of values onto {1, u, ..., u^degree} at the given states.
// Deterministic: fixed-order pairwise sums and an unpivoted Cholesky on the
// equilibrated normal equations; rank deficiency reduces the degree (the
// degree-0 fit is a running mean, exact on constant input).
FittedPoly condexp_fit(std::span<const double> values, std::span<const double> states,
                       int degree);

// Same fit restricted to the paths listed in idx.
FittedPoly condexp_fit(std::span<const double> values, std::span<const double> states,
                       std::span<const std::uint32_t> idx, int degree);

}  // namespace obsw
