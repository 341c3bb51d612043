#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/rng.hpp"

namespace badgeinf {

struct KmeansResult {
  Eigen::MatrixXd centers;      // k x d
  std::vector<int> assignment;  // length n
  double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding. Deterministic given the stream.
inline KmeansResult kmeans(const Eigen::MatrixXd& points, int k, RngStream rng,
                           int max_iters = 100) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (n < k) throw std::invalid_argument("kmeans: more clusters than points");

  Eigen::MatrixXd centers(k, d);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());

  // k-means++ seeding
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_index(n)));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double d2 = (points.row(i) - centers.row(c - 1)).squaredNorm();
      if (d2 < dist2[i]) dist2[i] = d2;
      total += dist2[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(n));
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<int> assignment(n, -1);
  double inertia = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        double d2 = (points.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          arg = c;
        }
      }
      if (assignment[i] != arg) {
        assignment[i] = arg;
        changed = true;
      }
      inertia += best;
    }
    if (!changed && iter > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    std::vector<long> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assignment[i]) += points.row(i);
      ++counts[assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        // re-seed an empty cluster at the point farthest from its center
        Eigen::Index far = 0;
        double worst = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double d2 = (points.row(i) - centers.row(assignment[i])).squaredNorm();
          if (d2 > worst) {
            worst = d2;
            far = i;
          }
        }
        centers.row(c) = points.row(far);
      }
    }
  }
  return {centers, assignment, inertia};
}

}  // namespace badgeinf
