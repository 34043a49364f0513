#include "obsw/regression.hpp"

#include <cmath>

#include "obsw/errors.hpp"
#include "obsw/threading.hpp"

namespace obsw {

namespace {

// Cholesky without pivoting; returns false when a pivot collapses, which the
// caller treats as rank deficiency. Operates on an equilibrated matrix, so a
// fixed relative pivot floor is meaningful.
bool cholesky(double* a, int m) {
  constexpr double kPivotFloor = 1e-10;
  for (int j = 0; j < m; ++j) {
    double diag = a[j * m + j];
    for (int k = 0; k < j; ++k) diag -= a[j * m + k] * a[j * m + k];
    if (!(diag > kPivotFloor)) return false;
    const double root = std::sqrt(diag);
    a[j * m + j] = root;
    for (int i = j + 1; i < m; ++i) {
      double v = a[i * m + j];
      for (int k = 0; k < j; ++k) v -= a[i * m + k] * a[j * m + k];
      a[i * m + j] = v / root;
    }
  }
  return true;
}

void cholesky_solve(const double* l, int m, double* b) {
  for (int i = 0; i < m; ++i) {
    double v = b[i];
    for (int k = 0; k < i; ++k) v -= l[i * m + k] * b[k];
    b[i] = v / l[i * m + i];
  }
  for (int i = m - 1; i >= 0; --i) {
    double v = b[i];
    for (int k = i + 1; k < m; ++k) v -= l[k * m + i] * b[k];
    b[i] = v / l[i * m + i];
  }
}

struct Sample {
  const double* values;
  const double* states;
  const std::uint32_t* idx;  // nullptr means the identity subset
  std::size_t n;

  double value(std::size_t r) const { return values[idx ? idx[r] : r]; }
  double state(std::size_t r) const { return states[idx ? idx[r] : r]; }
};

FittedPoly fit_sample(const Sample& s, int degree) {
  if (degree < 0 || degree > kMaxBasisDegree)
    raise(errc::parameter, "basis degree must lie in [0, 7]");
  if (s.n <= static_cast<std::size_t>(degree))
    raise(errc::parameter, "need more samples than basis functions");

  FittedPoly fit;
  fit.requested_degree = degree;

  // Normalize the states for conditioning.
  const double nd = static_cast<double>(s.n);
  const double mean = pairwise_sum(s.n, [&](std::size_t r) { return s.state(r); }) / nd;
  const double var = pairwise_sum(s.n, [&](std::size_t r) {
                       const double d = s.state(r) - mean;
                       return d * d;
                     }) / nd;
  const double sd = std::sqrt(var);
  fit.shift = mean;
  fit.scale = sd > 1e-300 ? sd : 1.0;

  for (int m = degree + 1; m >= 2; --m) {
    // Gram matrix and moment vector over {1, u, ..., u^(m-1)}.
    double gram[(kMaxBasisDegree + 1) * (kMaxBasisDegree + 1)] = {};
    double rhs[kMaxBasisDegree + 1] = {};
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b <= a; ++b) {
        const double g = pairwise_sum(s.n, [&](std::size_t r) {
          const double u = (s.state(r) - fit.shift) / fit.scale;
          double pa = 1.0, pb = 1.0;
          for (int q = 0; q < a; ++q) pa *= u;
          for (int q = 0; q < b; ++q) pb *= u;
          return pa * pb;
        });
        gram[a * m + b] = g;
        gram[b * m + a] = g;
      }
      rhs[a] = pairwise_sum(s.n, [&](std::size_t r) {
        const double u = (s.state(r) - fit.shift) / fit.scale;
        double pa = 1.0;
        for (int q = 0; q < a; ++q) pa *= u;
        return pa * s.value(r);
      });
    }
    // Equilibrate: D^-1 G D^-1 with D = sqrt(diag).
    double dscale[kMaxBasisDegree + 1];
    bool degenerate = false;
    for (int a = 0; a < m; ++a) {
      const double dv = gram[a * m + a];
      if (!(dv > 0.0)) {
        degenerate = true;
        break;
      }
      dscale[a] = std::sqrt(dv);
    }
    if (!degenerate) {
      double work[(kMaxBasisDegree + 1) * (kMaxBasisDegree + 1)];
      double beta[kMaxBasisDegree + 1];
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) work[a * m + b] = gram[a * m + b] / (dscale[a] * dscale[b]);
      for (int a = 0; a < m; ++a) beta[a] = rhs[a] / dscale[a];
      if (cholesky(work, m)) {
        cholesky_solve(work, m, beta);
        fit.degree = m - 1;
        for (int a = 0; a < m; ++a) fit.coeff[a] = beta[a] / dscale[a];
        return fit;
      }
    }
    // fall through: reduce the degree and retry
  }

  // Constant fit. The running mean is exact when every value is identical,
  // which the degenerate terminal states rely on.
  fit.degree = 0;
  double m0 = 0.0, k = 0.0;
  for (std::size_t r = 0; r < s.n; ++r) {
    k += 1.0;
    m0 += (s.value(r) - m0) / k;
  }
  fit.coeff[0] = m0;
  return fit;
}

}  // namespace

FittedPoly condexp_fit(std::span<const double> values, std::span<const double> states,
                       int degree) {
  if (values.size() != states.size())
    raise(errc::structural, "values and states must have equal length");
  return fit_sample({values.data(), states.data(), nullptr, values.size()}, degree);
}

FittedPoly condexp_fit(std::span<const double> values, std::span<const double> states,
                       std::span<const std::uint32_t> idx, int degree) {
  return fit_sample({values.data(), states.data(), idx.data(), idx.size()}, degree);
}

}  // namespace obsw
