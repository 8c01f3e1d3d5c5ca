#ifndef LSCHAIN_SERIES_BOUNDS_HPP
#define LSCHAIN_SERIES_BOUNDS_HPP

#include <cmath>
#include <vector>

#include "lschain/types.hpp"

namespace lschain {

/// Majorant coefficients: B_1 = v_norm, B_j = (1/a) sum_{k=1}^{j-1} B_{j-k} B_k.
inline std::vector<double> bj_coefficients(double v_norm, double a, int j_max) {
  if (!(v_norm > 0.0) || !(a > 0.0))
    throw ConfigError("bj_coefficients: v_norm and a must be positive");
  if (j_max < 1) throw ConfigError("bj_coefficients: j_max must be >= 1");
  std::vector<double> b(static_cast<std::size_t>(j_max) + 1, 0.0);  // 1-based
  b[1] = v_norm;
  for (int j = 2; j <= j_max; ++j) {
    double s = 0.0;
    for (int k = 1; k <= j - 1; ++k) s += b[static_cast<std::size_t>(j - k)] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(j)] = s / a;
  }
  b.erase(b.begin());
  return b;  // b[j-1] = B_j
}

/// Generating function of the B_j: f(x) = (a/2)(1 - sqrt(1 - 4 v x / a)).
inline double bj_generating_function(double v_norm, double a, double x) {
  const double disc = 1.0 - 4.0 * v_norm * x / a;
  if (disc < 0.0) throw PreconditionError("bj_generating_function: outside convergence disk");
  return 0.5 * a * (1.0 - std::sqrt(disc));
}

/// Certified tail bound sum_{j'>j} tau_abs^{j'-1} B_{j'}, from the closed form
/// minus the partial sum. Requires tau_abs strictly inside the disk a/(4 v_norm).
inline double bj_tail(double v_norm, double a, double tau_abs, int j) {
  if (!(v_norm > 0.0) || !(a > 0.0)) throw ConfigError("bj_tail: v_norm and a must be positive");
  if (tau_abs < 0.0) throw ConfigError("bj_tail: tau_abs must be nonnegative");
  if (j < 0) throw ConfigError("bj_tail: j must be nonnegative");
  if (tau_abs == 0.0) return 0.0;
  if (!(tau_abs < a / (4.0 * v_norm)))
    throw PreconditionError("bj_tail: tau_abs outside the certified disk a/(4 v_norm)");
  const std::vector<double> b = bj_coefficients(v_norm, a, std::max(j, 1));
  double partial = 0.0;  // sum_{j'<=j} B_{j'} tau^{j'}
  double t = tau_abs;
  for (int jj = 1; jj <= j; ++jj) {
    partial += b[static_cast<std::size_t>(jj - 1)] * t;
    t *= tau_abs;
  }
  const double tail = (bj_generating_function(v_norm, a, tau_abs) - partial) / tau_abs;
  return std::max(tail, 0.0);
}

/// Closed form of sum_{j>=1} (j+1) x^{(j-1)/4} for 0 <= x < 1.
inline double resolvent_sum(double x) {
  if (!(x >= 0.0) || !(x < 1.0)) throw PreconditionError("resolvent_sum: need 0 <= x < 1");
  if (x == 0.0) return 2.0;
  const double y = std::pow(x, 0.25);
  return (2.0 - y) / ((1.0 - y) * (1.0 - y));
}

/// Truncated sum_{j=1}^{j_top} (j+1) x^{(j-1)/4}.
inline double resolvent_sum_truncated(double x, int j_top) {
  if (!(x >= 0.0)) throw PreconditionError("resolvent_sum_truncated: need x >= 0");
  double s = 0.0;
  for (int j = 1; j <= j_top; ++j) s += (j + 1) * std::pow(x, (j - 1) / 4.0);
  return s;
}

/// Gap quantity Delta(tau) = (1 - 8|tau| sum_{j>=1}(j+1)|tau|^{(j-1)/4}) / 2.
/// May be negative outside the certified disk; callers must handle that.
inline double delta_of_tau(double tau_abs) {
  if (tau_abs >= 1.0) return -1e300;  // the defining series diverges
  return 0.5 * (1.0 - 8.0 * tau_abs * resolvent_sum(tau_abs));
}

/// Residual of the scalar equation e^{2ca} - 1 + (e^{2ca} - 2ca - 1)/a - 1 = 0.
inline double a_equation_residual(double a, double c) {
  const double e = std::exp(2.0 * c * a);
  return e - 1.0 + (e - 2.0 * c * a - 1.0) / a - 1.0;
}

/// Bracketed bisection for the positive root of the a-equation at given c.
inline double solve_a_equation(double c, double tol = 1e-15) {
  if (!(c > 0.0)) throw ConfigError("solve_a_equation: c must be positive");
  double lo = 1e-12, hi = 1.0;
  double flo = a_equation_residual(lo, c);
  double fhi = a_equation_residual(hi, c);
  // The residual is increasing in a near the root; widen hi if needed.
  int guard = 0;
  while (flo * fhi > 0.0 && guard++ < 60) {
    hi *= 2.0;
    if (hi > 1e6) break;
    fhi = a_equation_residual(hi, c);
  }
  if (flo * fhi > 0.0) throw BracketingError("solve_a_equation: root not bracketed");
  for (int it = 0; it < 200 && (hi - lo) > tol * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = a_equation_residual(mid, c);
    if (flo * fm <= 0.0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return 0.5 * (lo + hi);
}

struct TauDomainEstimate {
  double t0 = 0.0;      // a_root / 4
  double a_root = 0.0;  // root of the a-equation
  double c = 0.0;       // (2 + sqrt 2)/Delta evaluated at Delta = 1/2
  double delta_at_t0 = 0.0;
  bool gap_denominator_positive = false;  // 1 - 8 t0 * resolvent_sum(t0) > 0
  bool delta_at_t0_ge_half = false;       // strict self-consistency (holds only at tau=0)
};

/// Certified coupling-radius estimate. The constant c is evaluated at the
/// worst admissible gap quantity Delta = 1/2; both self-consistency flags at
/// the resulting t0 are reported rather than assumed.
inline TauDomainEstimate tau_domain_estimate() {
  TauDomainEstimate out;
  out.c = (2.0 + std::sqrt(2.0)) / 0.5;
  out.a_root = solve_a_equation(out.c);
  out.t0 = out.a_root / 4.0;
  out.delta_at_t0 = delta_of_tau(out.t0);
  out.gap_denominator_positive = (1.0 - 8.0 * out.t0 * resolvent_sum(out.t0)) > 0.0;
  out.delta_at_t0_ge_half = out.delta_at_t0 >= 0.5;
  return out;
}

}  // namespace lschain

#endif  // LSCHAIN_SERIES_BOUNDS_HPP
