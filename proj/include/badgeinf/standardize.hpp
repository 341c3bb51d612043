#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace badgeinf {

// Column-wise zero-mean unit-variance transform with train-set statistics,
// reusable at prediction time.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // floored standard deviations

  static Standardizer fit(const Eigen::MatrixXd& x) {
    if (x.rows() < 1) throw std::invalid_argument("Standardizer: empty matrix");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double var = (x.col(j).array() - s.mean[j]).square().sum() /
                   std::max<double>(1.0, static_cast<double>(x.rows() - 1));
      s.scale[j] = std::sqrt(std::max(var, 1e-24));
    }
    return s;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (x.size() != mean.size())
      throw std::invalid_argument("Standardizer: dimension mismatch");
    return (x - mean).cwiseQuotient(scale);
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= scale.transpose().array();
    return out;
  }
};

}  // namespace badgeinf
