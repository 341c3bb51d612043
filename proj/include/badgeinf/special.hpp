#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace badgeinf {

namespace detail {

inline double lgamma_safe(double x) {
#ifdef __GLIBC__
  int sign = 0;  // lgamma_r avoids the signgam global, safe across threads
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

}  // namespace detail

// log Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: x must be positive");
  return detail::lgamma_safe(x);
}

namespace detail {

// Regularized lower incomplete gamma P(a, x), series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - detail::lgamma_safe(a));
}

// Regularized upper incomplete gamma Q(a, x), continued fraction (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - detail::lgamma_safe(a)) * h;
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("gamma_p: a must be positive");
  if (x < 0.0) throw std::domain_error("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

// Chi-square CDF with df degrees of freedom.
inline double chi_square_cdf(double x, int df) {
  if (df < 1) throw std::domain_error("chi_square_cdf: df must be >= 1");
  if (x < 0.0) throw std::domain_error("chi_square_cdf: x must be nonnegative");
  return gamma_p(0.5 * df, 0.5 * x);
}

// log(n choose k).
inline double log_choose(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return detail::lgamma_safe(n + 1.0) - detail::lgamma_safe(k + 1.0) - detail::lgamma_safe(n - k + 1.0);
}

// One-sided binomial tail P(X >= k) for X ~ Binomial(n, p).
inline double binomial_tail(int n, int k, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double logp = std::log(p);
  double logq = std::log1p(-p);
  double sum = 0.0;
  for (int j = k; j <= n; ++j)
    sum += std::exp(log_choose(n, j) + j * logp + (n - j) * logq);
  return std::min(sum, 1.0);
}

// Asymptotic Kolmogorov distribution tail Q(lambda) = P(D > lambda / sqrt(n)).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-16) break;
  }
  return std::max(0.0, std::min(1.0, 2.0 * sum));
}

// One-sample Kolmogorov-Smirnov test of values against U[0,1].
// Returns the asymptotic p-value. Values outside [0,1] are clamped.
inline double ks_uniform_pvalue(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("ks_uniform_pvalue: empty");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = std::min(1.0, std::max(0.0, values[i]));
    d = std::max(d, std::fabs((i + 1.0) / n - v));
    d = std::max(d, std::fabs(v - i / n));
  }
  return kolmogorov_q(d * std::sqrt(n));
}

}  // namespace badgeinf
