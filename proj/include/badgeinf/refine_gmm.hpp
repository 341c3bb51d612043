#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/kmeans.hpp"
#include "badgeinf/logistic.hpp"
#include "badgeinf/parallel.hpp"
#include "badgeinf/rng.hpp"
#include "badgeinf/standardize.hpp"

namespace badgeinf {

// NHST outcome groups, plus X for users the test could not be run on
// (co-clustered under uninformative priors).
enum class Group { P = 0, N = 1, X = 2 };

struct GroupPriorConfig {
  double fpr = 0.25;
  double fnr = 0.4;
  double sigma = 1.0;
  int num_clusters = 4;       // K
  std::vector<int> labeling;  // 0 = C0, 1 = C1 per cluster; empty: derived
                              // from the initialization by label_clusters
  // The published pseudo-count table divides the (1-FPR) and (1-FNR) rows by
  // |C0| and |C1| even though they index the opposite cluster sets; this flag
  // switches to denominators matching the indexed sets instead.
  bool swap_denominators = false;
  int max_iters = 300;
  double tolerance = 1e-6;
  int restarts = 3;

  void validate() const {
    if (!(fpr >= 0.0 && fpr <= 1.0) || !(fnr >= 0.0 && fnr <= 1.0))
      throw std::invalid_argument("GroupPriorConfig: fpr/fnr must be in [0,1]");
    if (!(sigma >= 0.0))
      throw std::invalid_argument("GroupPriorConfig: sigma must be >= 0");
    if (num_clusters < 2)
      throw std::invalid_argument("GroupPriorConfig: K must be >= 2");
    if (!labeling.empty()) {
      if (static_cast<int>(labeling.size()) != num_clusters)
        throw std::invalid_argument("GroupPriorConfig: labeling size != K");
      int ones = 0;
      for (int v : labeling) {
        if (v != 0 && v != 1)
          throw std::invalid_argument("GroupPriorConfig: labels must be 0/1");
        ones += v;
      }
      if (ones == 0 || ones == num_clusters)
        throw std::invalid_argument(
            "GroupPriorConfig: both C0 and C1 must be nonempty");
    }
    if (max_iters < 1 || !(tolerance > 0.0) || restarts < 1)
      throw std::invalid_argument("GroupPriorConfig: bad EM controls");
  }
};

// Per-group Dirichlet pseudo-counts over clusters.
struct GroupAlphas {
  Eigen::VectorXd p;
  Eigen::VectorXd n;
  Eigen::VectorXd x;

  const Eigen::VectorXd& of(Group g) const {
    switch (g) {
      case Group::P: return p;
      case Group::N: return n;
      default: return x;
    }
  }
};

// Grouped Gaussian mixture: shared component means/covariances, one mixing
// simplex per group, pseudo-counts, and the C0/C1 cluster labels.
struct GroupedGmm {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  Eigen::VectorXd mixing_p;
  Eigen::VectorXd mixing_n;
  Eigen::VectorXd mixing_x;
  GroupAlphas alphas;
  std::vector<int> labels;  // 1 marks C1 ("influenced") clusters
  Standardizer standardizer;
  double penalized_loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;

  int num_clusters() const { return static_cast<int>(means.size()); }

  const Eigen::VectorXd& mixing(Group g) const {
    switch (g) {
      case Group::P: return mixing_p;
      case Group::N: return mixing_n;
      default: return mixing_x;
    }
  }
};

// Pseudo-count table encoding trust in the NHST phase: how many users of
// each group should land in each cluster set, scaled by sigma. X users get
// uninformative mass.
inline GroupAlphas init_group_alphas(double count_p, double count_n,
                                     const GroupPriorConfig& cfg,
                                     const std::vector<int>& labels) {
  if (count_p < 0.0 || count_n < 0.0)
    throw std::invalid_argument("init_group_alphas: negative group count");
  int k = static_cast<int>(labels.size());
  double c0 = 0.0, c1 = 0.0;
  for (int v : labels) (v == 1 ? c1 : c0) += 1.0;
  if (c0 == 0.0 || c1 == 0.0)
    throw std::invalid_argument("init_group_alphas: empty C0 or C1");

  GroupAlphas a;
  a.p.resize(k);
  a.n.resize(k);
  a.x.resize(k);
  for (int c = 0; c < k; ++c) {
    if (labels[c] == 0) {
      a.p[c] = cfg.sigma * count_p * cfg.fpr / c0;
      a.n[c] = cfg.sigma * count_n * (1.0 - cfg.fnr) /
               (cfg.swap_denominators ? c0 : c1);
    } else {
      a.p[c] = cfg.sigma * count_p * (1.0 - cfg.fpr) /
               (cfg.swap_denominators ? c1 : c0);
      a.n[c] = cfg.sigma * count_n * cfg.fnr / c1;
    }
    a.x[c] = cfg.sigma;  // scaled so sigma = 0 gives pure unsupervised fitting
  }
  return a;
}

// Labels each cluster C1 when the responsibility-weighted share of P users
// among its P u N members exceeds the population share, then forces both
// sides nonempty.
inline std::vector<int> label_clusters(const Eigen::MatrixXd& responsibilities,
                                       const std::vector<Group>& groups) {
  const Eigen::Index n = responsibilities.rows();
  const Eigen::Index k = responsibilities.cols();
  if (static_cast<Eigen::Index>(groups.size()) != n)
    throw std::invalid_argument("label_clusters: size mismatch");

  double total_p = 0.0, total_pn = 0.0;
  Eigen::VectorXd mass_p = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd mass_pn = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (groups[i] == Group::X) continue;
    total_pn += 1.0;
    mass_pn += responsibilities.row(i).transpose();
    if (groups[i] == Group::P) {
      total_p += 1.0;
      mass_p += responsibilities.row(i).transpose();
    }
  }
  if (total_pn == 0.0)
    throw std::invalid_argument("label_clusters: no P or N users");
  double global_share = total_p / total_pn;

  std::vector<int> labels(k, 0);
  Eigen::VectorXd share(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    share[c] = mass_pn[c] > 0.0 ? mass_p[c] / mass_pn[c] : global_share;
    labels[c] = share[c] > global_share ? 1 : 0;
  }

  int ones = 0;
  for (int v : labels) ones += v;
  if (ones == 0) {
    Eigen::Index best = 0;
    share.maxCoeff(&best);
    labels[best] = 1;
  } else if (ones == static_cast<int>(k)) {
    Eigen::Index worst = 0;
    share.minCoeff(&worst);
    labels[worst] = 0;
  }
  return labels;
}

namespace detail {

struct GaussianComponent {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_norm = 0.0;  // -(d/2) log 2pi - (1/2) log |Sigma|

  void set(const Eigen::MatrixXd& cov) {
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("gaussian component: covariance not PD");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
      logdet += 2.0 * std::log(llt.matrixL()(i, i));
    log_norm = -0.5 * (cov.rows() * std::log(2.0 * M_PI) + logdet);
  }

  double log_density(const Eigen::VectorXd& centered) const {
    Eigen::VectorXd y = llt.matrixL().solve(centered);
    return log_norm - 0.5 * y.squaredNorm();
  }
};

// Adds a ridge until the covariance admits a Cholesky factorization.
inline Eigen::MatrixXd regularize_cov(Eigen::MatrixXd cov, double base_var) {
  double eps = 1e-6 * std::max(base_var, 1e-12);
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
      // also reject near-singular factors that would blow up solves
      double min_diag = llt.matrixL()(0, 0);
      for (Eigen::Index i = 0; i < cov.rows(); ++i)
        min_diag = std::min(min_diag, llt.matrixL()(i, i));
      if (min_diag * min_diag > 1e-12 * std::max(base_var, 1e-12)) return cov;
    }
    cov += eps * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    eps *= 10.0;
  }
  throw std::runtime_error("regularize_cov: could not stabilize covariance");
}

inline double dirichlet_prior_term(const GroupAlphas& alphas,
                                   const GroupedGmm& model) {
  double term = 0.0;
  const Group gs[] = {Group::P, Group::N, Group::X};
  for (Group g : gs) {
    const Eigen::VectorXd& a = alphas.of(g);
    const Eigen::VectorXd& pi = model.mixing(g);
    for (Eigen::Index c = 0; c < a.size(); ++c)
      if (a[c] > 0.0) term += a[c] * std::log(std::max(pi[c], 1e-300));
  }
  return term;
}

}  // namespace detail

// Deterministic initialization shared with reference implementations in the
// tests: k-means++ centers and a shared spherical covariance.
struct GmmInit {
  std::vector<Eigen::VectorXd> means;
  Eigen::MatrixXd covariance;
};

inline GmmInit default_gmm_init(const Eigen::MatrixXd& x, int k, RngStream rng) {
  GmmInit init;
  KmeansResult km = kmeans(x, k, rng);
  for (int c = 0; c < k; ++c) init.means.push_back(km.centers.row(c).transpose());
  Eigen::VectorXd mean = x.colwise().mean();
  double pooled = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    pooled += (x.col(j).array() - mean[j]).square().sum();
  pooled /= std::max<double>(1.0, static_cast<double>(x.rows() * x.cols()));
  init.covariance =
      std::max(pooled, 1e-12) * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return init;
}

struct SemiSupervisedFit {
  GroupedGmm model;
  Eigen::MatrixXd responsibilities;  // n x K
};

// EM for the grouped mixture: standard Gaussian E/M steps except that each
// user's mixing weights come from their group and the per-group weights are
// updated as normalized (alpha + soft counts). Monotone in the penalized
// log-likelihood (data term plus Dirichlet prior term).
inline SemiSupervisedFit fit_semisupervised(const Eigen::MatrixXd& covariates,
                                            const std::vector<Group>& groups,
                                            const GroupPriorConfig& cfg,
                                            RngStream rng, int threads = 0) {
  cfg.validate();
  const Eigen::Index n = covariates.rows();
  const int k = cfg.num_clusters;
  if (n < k)
    throw std::invalid_argument("fit_semisupervised: fewer users than clusters");
  if (static_cast<Eigen::Index>(groups.size()) != n)
    throw std::invalid_argument("fit_semisupervised: group list size mismatch");

  Standardizer standardizer = Standardizer::fit(covariates);
  Eigen::MatrixXd x = standardizer.apply(covariates);
  const Eigen::Index d = x.cols();

  double count_p = 0.0, count_n = 0.0;
  for (Group g : groups) {
    if (g == Group::P) count_p += 1.0;
    else if (g == Group::N) count_n += 1.0;
  }

  double base_var = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double m = x.col(j).mean();
    base_var += (x.col(j).array() - m).square().sum() /
                std::max<double>(1.0, static_cast<double>(n - 1));
  }
  base_var /= static_cast<double>(d);

  SemiSupervisedFit best;
  double best_ll = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    GmmInit init = default_gmm_init(x, k, rng.derive(restart));

    GroupedGmm model;
    model.standardizer = standardizer;
    model.means = init.means;
    model.covariances.assign(k, init.covariance);

    std::vector<detail::GaussianComponent> comps(k);
    for (int c = 0; c < k; ++c) comps[c].set(model.covariances[c]);

    // group mixing starts at normalized (alpha + uniform data mass); the
    // labeling needed for alpha comes from the configuration or from a
    // responsibility pass under uniform mixing
    Eigen::MatrixXd resp(n, k);
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(k, 1.0 / k);
    auto e_pass = [&](bool uniform_mixing) {
      std::vector<double> row_ll(n, 0.0);
      parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        Eigen::VectorXd logw(k);
        const Eigen::VectorXd& pi =
            uniform_mixing ? uniform : model.mixing(groups[i]);
        for (int c = 0; c < k; ++c) {
          Eigen::VectorXd centered = x.row(i).transpose() - model.means[c];
          logw[c] = std::log(std::max(pi[c], 1e-300)) +
                    comps[c].log_density(centered);
        }
        double hi = logw.maxCoeff();
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(logw[c] - hi);
        lse = hi + std::log(lse);
        for (int c = 0; c < k; ++c) resp(i, c) = std::exp(logw[c] - lse);
        row_ll[i] = lse;
      });
      double total = 0.0;
      for (double v : row_ll) total += v;
      return total;
    };

    e_pass(true);
    std::vector<int> labels =
        cfg.labeling.empty() ? label_clusters(resp, groups) : cfg.labeling;
    model.labels = labels;
    model.alphas = init_group_alphas(count_p, count_n, cfg, labels);

    auto mixing_update = [&](Group g) {
      const Eigen::VectorXd& a = model.alphas.of(g);
      Eigen::VectorXd stat = a;
      for (Eigen::Index i = 0; i < n; ++i)
        if (groups[i] == g) stat += resp.row(i).transpose();
      double total = stat.sum();
      if (total <= 0.0) return Eigen::VectorXd::Constant(k, 1.0 / k).eval();
      return (stat / total).eval();
    };

    model.mixing_p = mixing_update(Group::P);
    model.mixing_n = mixing_update(Group::N);
    model.mixing_x = mixing_update(Group::X);

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      double data_ll = e_pass(false);
      double pen_ll = data_ll + detail::dirichlet_prior_term(model.alphas, model);

      // M step: means and covariances pooled over all users
      for (int c = 0; c < k; ++c) {
        double nc = resp.col(c).sum();
        if (nc < 1e-10) continue;  // starved cluster keeps its parameters
        Eigen::VectorXd mu = (resp.col(c).transpose() * x).transpose() / nc;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index i = 0; i < n; ++i) {
          Eigen::VectorXd centered = x.row(i).transpose() - mu;
          cov += resp(i, c) * centered * centered.transpose();
        }
        cov /= nc;
        model.means[c] = mu;
        model.covariances[c] = detail::regularize_cov(cov, base_var);
        comps[c].set(model.covariances[c]);
      }
      model.mixing_p = mixing_update(Group::P);
      model.mixing_n = mixing_update(Group::N);
      model.mixing_x = mixing_update(Group::X);

      model.iterations = iter + 1;
      model.penalized_loglik = pen_ll;
      if (iter > 0 && std::fabs(pen_ll - prev_ll) <
                          cfg.tolerance * (std::fabs(prev_ll) + 1.0)) {
        model.converged = true;
        break;
      }
      prev_ll = pen_ll;
    }
    // final E pass so the responsibilities match the returned parameters
    double data_ll = e_pass(false);
    model.penalized_loglik =
        data_ll + detail::dirichlet_prior_term(model.alphas, model);
    model.labels = label_clusters(resp, groups);

    if (model.penalized_loglik > best_ll) {
      best_ll = model.penalized_loglik;
      best.model = model;
      best.responsibilities = resp;
    }
  }
  return best;
}

// Posterior mass on the C1 clusters for one user under their group's mixing
// weights (X for new users). Covariates are raw; standardization is applied
// internally.
inline double influence_score(const GroupedGmm& model,
                              const Eigen::VectorXd& covariates,
                              Group group = Group::X) {
  const int k = model.num_clusters();
  Eigen::VectorXd z = model.standardizer.apply(covariates);
  const Eigen::VectorXd& pi = model.mixing(group);
  Eigen::VectorXd logw(k);
  for (int c = 0; c < k; ++c) {
    detail::GaussianComponent comp;
    comp.set(model.covariances[c]);
    logw[c] = std::log(std::max(pi[c], 1e-300)) +
              comp.log_density(z - model.means[c]);
  }
  double hi = logw.maxCoeff();
  double lse = 0.0;
  for (int c = 0; c < k; ++c) lse += std::exp(logw[c] - hi);
  lse = hi + std::log(lse);
  double score = 0.0;
  for (int c = 0; c < k; ++c)
    if (model.labels[c] == 1) score += std::exp(logw[c] - lse);
  return std::min(1.0, std::max(0.0, score));  // guard simplex roundoff
}

// Generalizing classifier: logistic weights fit to the influence scores of
// the badge-holding users. Prediction for any user is sigmoid(w . x~) on
// standardized covariates.
inline Eigen::VectorXd train_downstream_classifier(
    const GroupedGmm& model, const Eigen::MatrixXd& covariates,
    const std::vector<Group>& groups, double l2 = 1e-4) {
  Eigen::MatrixXd x = model.standardizer.apply(covariates);
  Eigen::VectorXd targets(covariates.rows());
  for (Eigen::Index i = 0; i < covariates.rows(); ++i)
    targets[i] =
        influence_score(model, covariates.row(i).transpose(), groups[i]);
  return fit_logistic(x, targets, l2);
}

inline double downstream_predict(const GroupedGmm& model,
                                 const Eigen::VectorXd& weights,
                                 const Eigen::VectorXd& covariates) {
  return logistic_predict(weights, model.standardizer.apply(covariates));
}

}  // namespace badgeinf
