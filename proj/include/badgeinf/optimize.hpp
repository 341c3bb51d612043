#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "badgeinf/rng.hpp"

namespace badgeinf {

struct OptimizerConfig {
  int max_iters = 500;
  double tolerance = 1e-8;  // stop when the simplex objective spread drops below
  int restarts = 3;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("OptimizerConfig: max_iters >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("OptimizerConfig: tolerance > 0");
    if (restarts < 1) throw std::invalid_argument("OptimizerConfig: restarts >= 1");
  }
};

namespace detail {

// Nelder-Mead on an unconstrained objective. Maximizes.
inline std::pair<std::vector<double>, double> nelder_mead_max(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> init, int max_iters, double tol, double step) {
  const std::size_t d = init.size();
  const double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  std::vector<std::vector<double>> pts(d + 1, init);
  for (std::size_t i = 0; i < d; ++i) pts[i + 1][i] += step;

  std::vector<double> vals(d + 1);
  for (std::size_t i = 0; i <= d; ++i) {
    double v = f(pts[i]);
    vals[i] = std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  }

  auto order = [&] {
    std::vector<std::size_t> idx(d + 1);
    for (std::size_t i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    std::vector<std::vector<double>> p2(d + 1);
    std::vector<double> v2(d + 1);
    for (std::size_t i = 0; i <= d; ++i) {
      p2[i] = pts[idx[i]];
      v2[i] = vals[idx[i]];
    }
    pts.swap(p2);
    vals.swap(v2);
  };
  order();

  auto eval = [&](const std::vector<double>& x) {
    double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    if (std::isfinite(vals[0]) && std::isfinite(vals[d]) &&
        vals[0] - vals[d] < tol * (std::fabs(vals[0]) + tol))
      break;

    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += pts[i][j] / d;

    auto along = [&](double c) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j)
        x[j] = centroid[j] + c * (centroid[j] - pts[d][j]);
      return x;
    };

    std::vector<double> xr = along(kReflect);
    double fr = eval(xr);
    if (fr > vals[0]) {
      std::vector<double> xe = along(kExpand);
      double fe = eval(xe);
      if (fe > fr) {
        pts[d] = xe;
        vals[d] = fe;
      } else {
        pts[d] = xr;
        vals[d] = fr;
      }
    } else if (fr > vals[d - 1]) {
      pts[d] = xr;
      vals[d] = fr;
    } else {
      std::vector<double> xc = along(-kContract);
      double fc = eval(xc);
      if (fc > vals[d]) {
        pts[d] = xc;
        vals[d] = fc;
      } else {
        for (std::size_t i = 1; i <= d; ++i) {
          for (std::size_t j = 0; j < d; ++j)
            pts[i][j] = pts[0][j] + kShrink * (pts[i][j] - pts[0][j]);
          vals[i] = eval(pts[i]);
        }
      }
    }
    order();
  }
  return {pts[0], vals[0]};
}

}  // namespace detail

// Maximizes an objective over strictly positive vectors. Positivity is kept by
// searching in log-parameter space with a derivative-free simplex; restarts
// perturb the starting point. The result never scores below the initial point.
inline std::vector<double> maximize_positive(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& init, const OptimizerConfig& config,
    RngStream* rng = nullptr) {
  config.validate();
  if (init.empty()) throw std::invalid_argument("maximize_positive: empty init");
  for (double v : init)
    if (!(v > 0.0))
      throw std::invalid_argument("maximize_positive: init must be positive");

  double f_init = objective(init);
  if (!std::isfinite(f_init))
    throw std::invalid_argument("maximize_positive: objective not finite at init");

  // keep the search inside a generous box so flat objectives cannot drive the
  // parameters to overflow
  static constexpr double kLogBound = 25.0;
  auto clamp_z = [](double z) {
    return std::min(kLogBound, std::max(-kLogBound, z));
  };

  auto f_log = [&](const std::vector<double>& z) {
    std::vector<double> x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = std::exp(clamp_z(z[i]));
    return objective(x);
  };

  std::vector<double> z0(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) z0[i] = clamp_z(std::log(init[i]));

  std::vector<double> best_z = z0;
  double best_f = f_init;
  RngStream local = rng ? *rng : RngStream(0x5eedu, 17);
  for (int r = 0; r < config.restarts; ++r) {
    std::vector<double> start = z0;
    if (r > 0)
      for (double& s : start) s += 0.5 * local.normal01();
    auto [z, fv] =
        detail::nelder_mead_max(f_log, start, config.max_iters, config.tolerance, 0.25);
    if (fv > best_f) {
      best_f = fv;
      best_z = z;
    }
  }

  std::vector<double> out(best_z.size());
  for (std::size_t i = 0; i < best_z.size(); ++i)
    out[i] = std::exp(clamp_z(best_z[i]));
  return out;
}

}  // namespace badgeinf
