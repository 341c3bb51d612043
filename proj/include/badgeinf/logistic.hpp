#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace badgeinf {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Least-squares logistic fit: minimizes
//   sum_u (sigmoid(w . x~_u) - gamma_u)^2 + l2 ||w||^2
// where x~ is x augmented with a trailing constant 1. Targets may be soft
// (EM responsibilities). Returns w of length d+1, bias last.
inline Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& targets, double l2,
                                    int max_iters = 2000, double tol = 1e-10) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n < 1) throw std::invalid_argument("fit_logistic: need at least one row");
  if (targets.size() != n)
    throw std::invalid_argument("fit_logistic: targets/features size mismatch");
  if (l2 < 0.0) throw std::invalid_argument("fit_logistic: l2 must be >= 0");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(targets[i] >= 0.0 && targets[i] <= 1.0))
      throw std::invalid_argument("fit_logistic: targets must lie in [0,1]");

  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = features;
  x.col(d).setOnes();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);

  auto objective = [&](const Eigen::VectorXd& wv) {
    double obj = l2 * wv.squaredNorm();
    Eigen::VectorXd z = x * wv;
    for (Eigen::Index i = 0; i < n; ++i) {
      double r = sigmoid(z[i]) - targets[i];
      obj += r * r;
    }
    return obj;
  };

  double obj = objective(w);
  double step = 1.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::VectorXd z = x * w;
    Eigen::VectorXd coef(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = sigmoid(z[i]);
      coef[i] = 2.0 * (s - targets[i]) * s * (1.0 - s);
    }
    Eigen::VectorXd grad = x.transpose() * coef + 2.0 * l2 * w;
    double gnorm = grad.norm();
    if (gnorm < tol) break;

    // backtracking line search on the squared-error objective
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      Eigen::VectorXd w_try = w - step * grad;
      double obj_try = objective(w_try);
      if (obj_try < obj - 1e-4 * step * gnorm * gnorm) {
        w = w_try;
        obj = obj_try;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return w;
}

// Fitted-model prediction for a single covariate vector (bias appended).
inline double logistic_predict(const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& x) {
  if (weights.size() != x.size() + 1)
    throw std::invalid_argument("logistic_predict: weight/feature size mismatch");
  double z = weights[weights.size() - 1];
  for (Eigen::Index i = 0; i < x.size(); ++i) z += weights[i] * x[i];
  return sigmoid(z);
}

}  // namespace badgeinf
