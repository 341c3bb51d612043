#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/model.hpp"
#include "badgeinf/rng.hpp"
#include "badgeinf/samplers.hpp"

namespace badgeinf {

struct SyntheticConfig {
  int num_users = 1000;       // N; half traced, half covariate-only
  double pi = 0.5;            // P(i_u = 1)
  double delta_lambda = 0.0;  // badge effect strength, must stay below 10
  double delta_x = 0.0;       // covariate separation between classes
  double trend = 0.0;         // A: rates become rate * (1 + A t)
  std::uint64_t seed = 0;

  void validate() const {
    if (num_users < 2 || num_users % 2 != 0)
      throw std::invalid_argument("SyntheticConfig: N must be even and >= 2");
    if (!(pi >= 0.0 && pi <= 1.0))
      throw std::invalid_argument("SyntheticConfig: pi must be in [0,1]");
    if (delta_lambda < 0.0 || delta_lambda >= 10.0)
      throw std::invalid_argument(
          "SyntheticConfig: delta_lambda must be in [0, 10)");
    if (delta_x < 0.0)
      throw std::invalid_argument("SyntheticConfig: delta_x must be >= 0");
    if (trend < 0.0)
      throw std::invalid_argument("SyntheticConfig: trend must be >= 0");
  }
};

// User without a temporal trace: covariates plus the latent label only.
struct FeatureUser {
  std::string user_id;
  Eigen::VectorXd covariates;
  std::optional<int> truth;
};

// Realized per-user intensities, kept for oracle checks.
struct IntensityRecord {
  int label = 0;
  double lambda0 = 0.0;        // label 0: constant rate
  double lambda1_before = 0.0; // label 1: rate up to the badge
  double lambda1_after = 0.0;  // label 1: rate after the badge
};

struct SyntheticDataset {
  std::vector<UserTrace> traced_users;
  std::vector<FeatureUser> feature_only_users;
  std::vector<IntensityRecord> intensities;  // aligned with traced_users
  Eigen::MatrixXd sigma;                     // shared covariate covariance
  double s_max = 0.0;                        // dominant eigenvalue of sigma
  Eigen::VectorXd v_max;                     // corresponding unit eigenvector
  SyntheticConfig config;
};

// Gamma draws matched to the protocol's moments: mean 10 and variance 25 for
// the constant-rate class; mean 10 - delta_lambda and variance 25 for the
// post-badge rate, with the pre-badge rate offset by exactly 2 delta_lambda.
inline IntensityRecord sample_intensities(int label, double delta_lambda,
                                          RngStream& rng) {
  if (delta_lambda < 0.0 || delta_lambda >= 10.0)
    throw std::invalid_argument("sample_intensities: delta_lambda in [0, 10)");
  IntensityRecord rec;
  rec.label = label;
  if (label == 0) {
    rec.lambda0 = sample_gamma(100.0 / 25.0, 10.0 / 25.0, rng);
  } else {
    double mean = 10.0 - delta_lambda;
    rec.lambda1_after = sample_gamma(mean * mean / 25.0, mean / 25.0, rng);
    rec.lambda1_before = rec.lambda1_after + 2.0 * delta_lambda;
  }
  return rec;
}

struct BadgeWindow {
  double start = 0.0;
  double badge = 0.0;
  double end = 0.0;
};

// s_u = 0, b_u = 100 / (pre-badge rate), e_u = b_u (1 + v) with v ~ U[0,1].
inline BadgeWindow place_badge(const IntensityRecord& rec, RngStream& rng) {
  double base = rec.label == 0 ? rec.lambda0 : rec.lambda1_before;
  if (!(base > 0.0)) throw std::invalid_argument("place_badge: nonpositive rate");
  BadgeWindow w;
  w.start = 0.0;
  w.badge = 100.0 / base;
  double v = rng.uniform01();
  if (v < 1e-9) v = 1e-9;  // keep the window nondegenerate
  w.end = w.badge * (1.0 + v);
  return w;
}

// Piecewise-constant base rate (single regime for label 0, split at the badge
// for label 1) optionally disturbed by the linear trend (1 + A t).
inline std::vector<double> sample_trace(const IntensityRecord& rec,
                                        const BadgeWindow& w, double trend,
                                        RngStream& rng) {
  auto base = [&](double t) {
    if (rec.label == 0) return rec.lambda0;
    return t <= w.badge ? rec.lambda1_before : rec.lambda1_after;
  };
  double peak = rec.label == 0 ? rec.lambda0
                               : std::max(rec.lambda1_before, rec.lambda1_after);
  double bound = peak * (1.0 + std::max(0.0, trend) * w.end);
  auto rate = [&](double t) { return base(t) * (1.0 + trend * t); };
  return sample_poisson_process(rate, bound, w.start, w.end, rng);
}

struct CovariateContext {
  Eigen::MatrixXd sigma;
  double s_max = 0.0;
  Eigen::VectorXd v_max;
};

inline CovariateContext make_covariate_context(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("covariate context: eigendecomposition failed");
  CovariateContext ctx;
  ctx.sigma = sigma;
  Eigen::Index top = sigma.rows() - 1;  // ascending order
  ctx.s_max = eig.eigenvalues()[top];
  ctx.v_max = eig.eigenvectors().col(top);
  // fix the eigenvector sign so downstream shifts are reproducible
  for (Eigen::Index i = 0; i < ctx.v_max.size(); ++i) {
    if (std::fabs(ctx.v_max[i]) > 1e-12) {
      if (ctx.v_max[i] < 0.0) ctx.v_max = -ctx.v_max;
      break;
    }
  }
  return ctx;
}

// x ~ N(0, Sigma) for label 0, N(delta_x * s_max * v_max, Sigma) for label 1.
inline Eigen::VectorXd sample_covariates(int label, double delta_x,
                                         const CovariateContext& ctx,
                                         RngStream& rng) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ctx.sigma.rows());
  if (label == 1) mean = delta_x * ctx.s_max * ctx.v_max;
  return sample_mvn(mean, ctx.sigma, rng);
}

inline std::string synth_user_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%06d", index);
  return buf;
}

// Full protocol: one shared Wishart(10, [[2,1],[1,2]]) covariance, Bernoulli
// labels, N/2 traced users (intensities, badge placement, events, covariates)
// and N/2 covariate-only users. Reproducible from the seed alone; every user
// draws from a stream keyed by its index.
inline SyntheticDataset generate_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds;
  ds.config = cfg;

  RngStream root(cfg.seed, 0);
  Eigen::MatrixXd scale(2, 2);
  scale << 2.0, 1.0, 1.0, 2.0;
  RngStream sigma_stream = root.derive(0);
  ds.sigma = sample_wishart(10, scale, sigma_stream);
  CovariateContext ctx = make_covariate_context(ds.sigma);
  ds.s_max = ctx.s_max;
  ds.v_max = ctx.v_max;

  const int half = cfg.num_users / 2;
  for (int i = 0; i < cfg.num_users; ++i) {
    RngStream stream = root.derive(static_cast<std::uint64_t>(i) + 1);
    int label = stream.uniform01() < cfg.pi ? 1 : 0;
    if (i < half) {
      IntensityRecord rec = sample_intensities(label, cfg.delta_lambda, stream);
      BadgeWindow w = place_badge(rec, stream);
      UserTrace t;
      t.user_id = synth_user_id(i);
      t.start = w.start;
      t.end = w.end;
      t.badge_time = w.badge;
      t.events = sample_trace(rec, w, cfg.trend, stream);
      t.covariates = sample_covariates(label, cfg.delta_x, ctx, stream);
      t.truth = label;
      t.validate();
      ds.traced_users.push_back(std::move(t));
      ds.intensities.push_back(rec);
    } else {
      FeatureUser f;
      f.user_id = synth_user_id(i);
      f.covariates = sample_covariates(label, cfg.delta_x, ctx, stream);
      f.truth = label;
      ds.feature_only_users.push_back(std::move(f));
    }
  }
  return ds;
}

}  // namespace badgeinf
