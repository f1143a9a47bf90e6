#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

namespace stlmon {

namespace detail {

/// log C(n, j) for j = 0..n, built by the multiplicative recurrence.
inline double log_binomial(std::int64_t n, std::int64_t j) {
  double acc = 0.0;
  const std::int64_t m = std::min(j, n - j);
  for (std::int64_t i = 0; i < m; ++i) acc += std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1));
  return acc;
}

inline double binomial_pmf(std::int64_t n, std::int64_t j, double p) {
  if (p <= 0.0) return j == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return j == n ? 1.0 : 0.0;
  return std::exp(log_binomial(n, j) + static_cast<double>(j) * std::log(p) + static_cast<double>(n - j) * std::log1p(-p));
}

}  // namespace detail

/// P[X >= k] for X ~ Binomial(n, p).
inline double binomial_upper_tail(std::int64_t n, std::int64_t k, double p) {
  double s = 0.0;
  for (std::int64_t j = k; j <= n; ++j) s += detail::binomial_pmf(n, j, p);
  return std::min(1.0, s);
}

/// P[X <= k] for X ~ Binomial(n, p).
inline double binomial_lower_tail(std::int64_t n, std::int64_t k, double p) {
  double s = 0.0;
  for (std::int64_t j = 0; j <= k; ++j) s += detail::binomial_pmf(n, j, p);
  return std::min(1.0, s);
}

struct ProportionInterval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact two-sided Clopper-Pearson interval by bisection on the binomial
/// tails, to 1e-10 in p.
inline ProportionInterval clopper_pearson(std::int64_t k, std::int64_t n, double alpha) {
  if (n < 1 || k < 0 || k > n) throw std::invalid_argument("clopper_pearson: need 0 <= k <= n, n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("clopper_pearson: alpha must be in (0,1)");
  const double target = alpha / 2.0;
  constexpr double kTol = 1e-10;

  ProportionInterval ci;
  if (k > 0) {
    // Upper tail P[X >= k] increases with p.
    double a = 0.0, b = 1.0;
    while (b - a > kTol) {
      const double mid = 0.5 * (a + b);
      (binomial_upper_tail(n, k, mid) < target ? a : b) = mid;
    }
    ci.lo = 0.5 * (a + b);
  }
  if (k < n) {
    // Lower tail P[X <= k] decreases with p.
    double a = 0.0, b = 1.0;
    while (b - a > kTol) {
      const double mid = 0.5 * (a + b);
      (binomial_lower_tail(n, k, mid) > target ? a : b) = mid;
    }
    ci.hi = 0.5 * (a + b);
  }
  return ci;
}

}  // namespace stlmon
