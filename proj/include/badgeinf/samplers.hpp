#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/rng.hpp"

namespace badgeinf {

// Gamma(shape, rate) via Marsaglia-Tsang; shape < 1 boosted through
// Gamma(shape + 1) and a power of a uniform.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    double u = rng.uniform01();
    while (u <= 0.0) u = rng.uniform01();
    return sample_gamma(shape + 1.0, rate, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal01();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = rng.uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

// Multivariate normal via the Cholesky factor of cov.
inline Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& cov, RngStream& rng) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw std::invalid_argument("sample_mvn: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_mvn: covariance not positive definite");
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal01();
  return mean + llt.matrixL() * z;
}

// Wishart(df, scale) via the Bartlett decomposition.
inline Eigen::MatrixXd sample_wishart(int df, const Eigen::MatrixXd& scale,
                                      RngStream& rng) {
  const Eigen::Index p = scale.rows();
  if (scale.cols() != p) throw std::invalid_argument("sample_wishart: scale not square");
  if (df < p) throw std::invalid_argument("sample_wishart: df must be >= dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_wishart: scale not positive definite");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    // chi-square with df - i degrees of freedom
    a(i, i) = std::sqrt(sample_gamma(0.5 * (df - i), 0.5, rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal01();
  }
  Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

// Non-homogeneous Poisson process on [a, b] by Ogata thinning: homogeneous
// candidates at rate_upper_bound, each kept with probability rate(t)/bound.
// For a constant rate this degenerates to exponential gaps.
inline std::vector<double> sample_poisson_process(
    const std::function<double(double)>& rate_fn, double rate_upper_bound,
    double window_start, double window_end, RngStream& rng) {
  if (!(window_end >= window_start))
    throw std::invalid_argument("sample_poisson_process: bad window");
  if (rate_upper_bound < 0.0)
    throw std::invalid_argument("sample_poisson_process: negative bound");
  std::vector<double> events;
  if (rate_upper_bound == 0.0) return events;
  double t = window_start;
  for (;;) {
    t += rng.exponential(rate_upper_bound);
    if (t > window_end) break;
    double r = rate_fn(t);
    if (r < 0.0)
      throw std::runtime_error("sample_poisson_process: negative rate");
    double ratio = r / rate_upper_bound;
    if (ratio > 1.0 + 1e-12)
      throw std::runtime_error("sample_poisson_process: rate exceeds upper bound");
    if (rng.uniform01() < ratio) events.push_back(t);
  }
  return events;
}

}  // namespace badgeinf
