#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/logistic.hpp"
#include "badgeinf/model.hpp"
#include "badgeinf/optimize.hpp"
#include "badgeinf/parallel.hpp"
#include "badgeinf/rng.hpp"
#include "badgeinf/standardize.hpp"

namespace badgeinf {

enum class MixingKind { Scalar, Covariate };

// Fitted two-cluster mixture over users' counting processes: gamma
// hyperpriors per cluster and either a scalar mixing probability or logistic
// weights over (standardized) covariates.
struct PoissonMixtureModel {
  GammaHyper theta0{1.0, 1.0};          // constant-rate cluster
  GammaHyper theta1_before{1.0, 1.0};   // changed cluster, pre-badge regime
  GammaHyper theta1_after{1.0, 1.0};    // changed cluster, post-badge regime
  MixingKind mixing = MixingKind::Scalar;
  double pi = 0.5;
  Eigen::VectorXd weights;       // covariate mode; bias last
  Standardizer standardizer;     // covariate mode

  void validate() const {
    theta0.validate();
    theta1_before.validate();
    theta1_after.validate();
    if (mixing == MixingKind::Scalar && !(pi > 0.0 && pi < 1.0))
      throw std::invalid_argument("PoissonMixtureModel: pi must be in (0,1)");
  }
};

struct Responsibilities {
  std::vector<double> gamma;  // per fitted user, in [0,1]
};

struct EmTrace {
  std::vector<double> observed_loglik;
  std::vector<double> complete_loglik;
  int iterations = 0;
  bool converged = false;
  bool flipped = false;  // orientation fix applied after convergence
  int restart_index = 0;
};

struct EmConfig {
  int max_iters = 200;
  double tolerance = 1e-6;  // relative observed-loglik change
  int restarts = 3;
  // per-M-step simplex budget; the search warm-starts from the incoming
  // hyperparameters every iteration, so a modest budget per step suffices
  OptimizerConfig hyper_opt{120, 1e-9, 1};

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("EmConfig: max_iters >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("EmConfig: tolerance > 0");
    if (restarts < 1) throw std::invalid_argument("EmConfig: restarts >= 1");
  }
};

struct PoissonEmResult {
  PoissonMixtureModel model;
  Responsibilities resp;                      // aligned with fitted_indices
  EmTrace trace;
  std::vector<std::size_t> fitted_indices;    // positions in the input list
  std::vector<std::size_t> excluded_indices;  // badge on the window edge etc.
};

namespace detail {

constexpr double kProbClamp = 1e-6;

inline double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

inline double user_mixing(const PoissonMixtureModel& model,
                          const Eigen::VectorXd& x_standardized) {
  if (model.mixing == MixingKind::Scalar) return model.pi;
  return logistic_predict(model.weights, x_standardized);
}

// theta0 maximization weight is (1 - gamma), theta1's is gamma; each factor
// of Eq-3-style marginals separates into an independent 2-parameter problem.
struct WeightedCounts {
  std::vector<double> lengths;
  std::vector<long> counts;
  std::vector<double> weights;
  double total_weight = 0.0;
};

inline double gamma_marginal_objective(const WeightedCounts& wc, double alpha,
                                       double beta) {
  double obj = wc.total_weight * (alpha * std::log(beta) - log_gamma(alpha));
  for (std::size_t i = 0; i < wc.lengths.size(); ++i) {
    obj += wc.weights[i] *
           (badgeinf::detail::lgamma_safe(alpha + wc.counts[i]) -
            (alpha + wc.counts[i]) * std::log(wc.lengths[i] + beta));
  }
  return obj;
}

inline GammaHyper maximize_gamma_hyper(const WeightedCounts& wc,
                                       const GammaHyper& incoming,
                                       const OptimizerConfig& opt) {
  if (wc.total_weight < 1e-10) return incoming;  // empty cluster: keep as is
  auto objective = [&](const std::vector<double>& v) {
    return gamma_marginal_objective(wc, v[0], v[1]);
  };
  GammaHyper start = incoming;
  if (!(std::isfinite(start.alpha) && start.alpha > 0.0 &&
        std::isfinite(start.beta) && start.beta > 0.0) ||
      !std::isfinite(objective({start.alpha, start.beta})))
    start = GammaHyper{1.0, 1.0};
  try {
    std::vector<double> out =
        maximize_positive(objective, {start.alpha, start.beta}, opt);
    return GammaHyper{out[0], out[1]};
  } catch (const std::exception&) {
    return incoming;  // keep the previous value, iteration marked non-improving
  }
}

// Moment-matched gamma prior from weighted empirical rates.
inline GammaHyper moment_match(const std::vector<double>& rates,
                               const std::vector<double>& weights) {
  double wsum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    wsum += weights[i];
    mean += weights[i] * rates[i];
  }
  if (wsum < 1e-10) return GammaHyper{1.0, 1.0};
  mean = std::max(mean / wsum, 1e-3);
  double var = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i)
    var += weights[i] * (rates[i] - mean) * (rates[i] - mean);
  var = std::max(var / wsum, 1e-4 * mean * mean + 1e-8);
  return GammaHyper{mean * mean / var, mean / var};
}

}  // namespace detail

// Posterior responsibilities gamma_u = P1 pi_u / (P1 pi_u + P0 (1 - pi_u)),
// computed in log space. Covariates must already be standardized.
inline Responsibilities e_step(const std::vector<TraceStats>& stats,
                               const PoissonMixtureModel& model,
                               const Eigen::MatrixXd* covariates = nullptr,
                               int threads = 0) {
  model.validate();
  Responsibilities resp;
  resp.gamma.assign(stats.size(), 0.0);
  parallel_for(stats.size(), threads, [&](std::size_t i) {
    if (!stats[i].has_badge)
      throw std::invalid_argument("e_step: trace without badge time");
    double pi_u = model.pi;
    if (model.mixing == MixingKind::Covariate) {
      if (!covariates)
        throw std::invalid_argument("e_step: covariate mode needs covariates");
      pi_u = logistic_predict(model.weights, covariates->row(i).transpose());
    }
    pi_u = detail::clamp_prob(pi_u);
    double log_p1 = log_marginal_alt(stats[i], model.theta1_before,
                                     model.theta1_after);
    double log_p0 = log_marginal_null(stats[i], model.theta0);
    double z = std::log(pi_u) - std::log1p(-pi_u) + log_p1 - log_p0;
    resp.gamma[i] = detail::clamp_prob(sigmoid(z));
  });
  return resp;
}

// pi = mean responsibility, clamped away from {0,1}.
inline double m_step_mixing(const Responsibilities& resp) {
  if (resp.gamma.empty()) throw std::invalid_argument("m_step_mixing: no users");
  double sum = 0.0;
  for (double g : resp.gamma) sum += g;
  return detail::clamp_prob(sum / static_cast<double>(resp.gamma.size()));
}

// Logistic weights fit to the responsibilities by least squares (bias last).
inline Eigen::VectorXd m_step_mixing_covariates(
    const Eigen::MatrixXd& covariates_standardized, const Responsibilities& resp,
    double l2 = 1e-4) {
  Eigen::VectorXd targets(covariates_standardized.rows());
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = resp.gamma[i];
  return fit_logistic(covariates_standardized, targets, l2);
}

// Weighted maximization of the collapsed marginals; three separable
// 2-parameter problems, each warm-started at the incoming value so the
// objective never decreases.
inline void m_step_hyper(const std::vector<TraceStats>& stats,
                         const Responsibilities& resp,
                         PoissonMixtureModel& model,
                         const OptimizerConfig& opt) {
  detail::WeightedCounts whole, before, after;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    double g = resp.gamma[i];
    whole.lengths.push_back(stats[i].l);
    whole.counts.push_back(stats[i].n);
    whole.weights.push_back(1.0 - g);
    whole.total_weight += 1.0 - g;
    before.lengths.push_back(stats[i].l0);
    before.counts.push_back(stats[i].n0);
    before.weights.push_back(g);
    before.total_weight += g;
    after.lengths.push_back(stats[i].l1);
    after.counts.push_back(stats[i].n1);
    after.weights.push_back(g);
    after.total_weight += g;
  }
  model.theta0 = detail::maximize_gamma_hyper(whole, model.theta0, opt);
  model.theta1_before = detail::maximize_gamma_hyper(before, model.theta1_before, opt);
  model.theta1_after = detail::maximize_gamma_hyper(after, model.theta1_after, opt);
}

namespace detail {

inline double observed_loglik(const std::vector<TraceStats>& stats,
                              const PoissonMixtureModel& model,
                              const Eigen::MatrixXd* covariates, int threads,
                              std::vector<double>& scratch) {
  scratch.assign(stats.size(), 0.0);
  parallel_for(stats.size(), threads, [&](std::size_t i) {
    double pi_u = model.pi;
    if (model.mixing == MixingKind::Covariate)
      pi_u = logistic_predict(model.weights, covariates->row(i).transpose());
    pi_u = clamp_prob(pi_u);
    double a = std::log(pi_u) +
               log_marginal_alt(stats[i], model.theta1_before, model.theta1_after);
    double b = std::log1p(-pi_u) + log_marginal_null(stats[i], model.theta0);
    double hi = std::max(a, b);
    scratch[i] = hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  });
  double total = 0.0;
  for (double v : scratch) total += v;  // serial reduction, fixed order
  return total;
}

inline double complete_loglik(const std::vector<TraceStats>& stats,
                              const PoissonMixtureModel& model,
                              const Responsibilities& resp,
                              const Eigen::MatrixXd* covariates) {
  double total = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    double pi_u = model.pi;
    if (model.mixing == MixingKind::Covariate)
      pi_u = logistic_predict(model.weights, covariates->row(i).transpose());
    pi_u = clamp_prob(pi_u);
    double g = resp.gamma[i];
    total += g * (std::log(pi_u) + log_marginal_alt(stats[i], model.theta1_before,
                                                    model.theta1_after)) +
             (1.0 - g) * (std::log1p(-pi_u) +
                          log_marginal_null(stats[i], model.theta0));
  }
  return total;
}

// Expected mixing log-likelihood under the responsibilities; used to accept
// or reject a proposed weight vector so EM stays monotone.
inline double mixing_q(const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                       const Responsibilities& resp) {
  double q = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double p = clamp_prob(logistic_predict(w, x.row(i).transpose()));
    q += resp.gamma[i] * std::log(p) + (1.0 - resp.gamma[i]) * std::log1p(-p);
  }
  return q;
}

// Responsibility-weighted mean absolute rate change; cluster 1 must own the
// larger one ("changed behavior").
inline double weighted_rate_change(const std::vector<TraceStats>& stats,
                                   const std::vector<double>& weights) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    double change = std::fabs(static_cast<double>(stats[i].n0) / stats[i].l0 -
                              static_cast<double>(stats[i].n1) / stats[i].l1);
    num += weights[i] * change;
    den += weights[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

// Feature-only prediction: the personalized mixing probability. Falls back to
// the scalar pi (flagged) when the model was fitted without covariates.
struct NewUserPrediction {
  double probability = 0.5;
  bool used_covariates = false;
};

inline NewUserPrediction predict_new_user(const PoissonMixtureModel& model,
                                          const Eigen::VectorXd& covariates) {
  if (model.mixing == MixingKind::Scalar) return {model.pi, false};
  Eigen::VectorXd z = model.standardizer.apply(covariates);
  return {logistic_predict(model.weights, z), true};
}

// EM fit. Alternates the mixing/hyperparameter maximizations with the
// responsibility update until the observed-data log-likelihood stalls.
// Users whose badge sits on the window edge are excluded with a diagnostic
// index list. Restarts jitter the heuristic initialization; the best final
// likelihood wins. After convergence the clusters are oriented so that
// cluster 1 carries the larger responsibility-weighted rate change.
inline PoissonEmResult fit_poisson_mixture(const std::vector<UserTrace>& traces,
                                           const EmConfig& config,
                                           bool covariate_mode, RngStream rng,
                                           int threads = 0) {
  config.validate();
  PoissonEmResult result;

  std::vector<TraceStats> stats;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    TraceStats s = compute_stats(traces[i]);
    if (s.has_badge && s.l0 > 0.0 && s.l1 > 0.0) {
      result.fitted_indices.push_back(i);
      stats.push_back(s);
    } else {
      result.excluded_indices.push_back(i);
    }
  }
  const std::size_t n = stats.size();
  if (n < 2)
    throw std::invalid_argument("fit_poisson_mixture: need >= 2 usable users");

  Eigen::MatrixXd x_std;
  Standardizer standardizer;
  if (covariate_mode) {
    Eigen::Index d = traces[result.fitted_indices[0]].covariates.size();
    if (d < 1)
      throw std::invalid_argument("fit_poisson_mixture: covariate mode with "
                                  "empty covariates");
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
      x.row(i) = traces[result.fitted_indices[i]].covariates.transpose();
    standardizer = Standardizer::fit(x);
    x_std = standardizer.apply(x);
  }
  const Eigen::MatrixXd* xp = covariate_mode ? &x_std : nullptr;

  // heuristic start: normalized rate change squashed through a sigmoid
  std::vector<double> heuristic(n);
  for (std::size_t i = 0; i < n; ++i) {
    double change = std::fabs(static_cast<double>(stats[i].n0) / stats[i].l0 -
                              static_cast<double>(stats[i].n1) / stats[i].l1);
    double overall = static_cast<double>(stats[i].n) / stats[i].l;
    heuristic[i] = detail::clamp_prob(sigmoid(change / (overall + 1e-9)));
  }

  PoissonMixtureModel best_model;
  Responsibilities best_resp;
  EmTrace best_trace;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> scratch;

  for (int restart = 0; restart < config.restarts; ++restart) {
    Responsibilities resp;
    resp.gamma = heuristic;
    if (restart > 0) {
      RngStream jitter = rng.derive(static_cast<std::uint64_t>(restart));
      for (double& g : resp.gamma)
        g = detail::clamp_prob(g + 0.15 * jitter.normal01());
    }

    PoissonMixtureModel model;
    model.mixing = covariate_mode ? MixingKind::Covariate : MixingKind::Scalar;
    model.standardizer = standardizer;
    {
      std::vector<double> r_whole(n), r_before(n), r_after(n), w0(n), w1(n);
      for (std::size_t i = 0; i < n; ++i) {
        r_whole[i] = static_cast<double>(stats[i].n) / stats[i].l;
        r_before[i] = static_cast<double>(stats[i].n0) / stats[i].l0;
        r_after[i] = static_cast<double>(stats[i].n1) / stats[i].l1;
        w0[i] = 1.0 - resp.gamma[i];
        w1[i] = resp.gamma[i];
      }
      model.theta0 = detail::moment_match(r_whole, w0);
      model.theta1_before = detail::moment_match(r_before, w1);
      model.theta1_after = detail::moment_match(r_after, w1);
    }
    if (covariate_mode)
      model.weights = Eigen::VectorXd::Zero(x_std.cols() + 1);

    EmTrace trace;
    trace.restart_index = restart;
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < config.max_iters; ++iter) {
      // M step
      if (covariate_mode) {
        Eigen::VectorXd w_new = m_step_mixing_covariates(x_std, resp);
        if (detail::mixing_q(w_new, x_std, resp) >=
            detail::mixing_q(model.weights, x_std, resp))
          model.weights = w_new;
      } else {
        model.pi = m_step_mixing(resp);
      }
      m_step_hyper(stats, resp, model, config.hyper_opt);

      // E step
      resp = e_step(stats, model, xp, threads);

      double ll = detail::observed_loglik(stats, model, xp, threads, scratch);
      trace.observed_loglik.push_back(ll);
      trace.complete_loglik.push_back(
          detail::complete_loglik(stats, model, resp, xp));
      trace.iterations = iter + 1;
      if (iter > 0 &&
          std::fabs(ll - prev_ll) < config.tolerance * (std::fabs(prev_ll) + 1.0)) {
        trace.converged = true;
        prev_ll = ll;
        break;
      }
      prev_ll = ll;
    }

    if (prev_ll > best_ll) {
      best_ll = prev_ll;
      best_model = model;
      best_resp = resp;
      best_trace = trace;
    }
  }

  // orient cluster 1 toward the larger weighted rate change; when the fit
  // landed inverted, flip the responsibilities and refit one M/E round so the
  // hyperparameters agree with the reported orientation
  std::vector<double> anti(n);
  for (std::size_t i = 0; i < n; ++i) anti[i] = 1.0 - best_resp.gamma[i];
  if (detail::weighted_rate_change(stats, anti) >
      detail::weighted_rate_change(stats, best_resp.gamma)) {
    best_trace.flipped = true;
    best_resp.gamma.swap(anti);
    if (best_model.mixing == MixingKind::Scalar) {
      best_model.pi = detail::clamp_prob(1.0 - best_model.pi);
    } else {
      Eigen::VectorXd w_new = m_step_mixing_covariates(x_std, best_resp);
      best_model.weights = detail::mixing_q(w_new, x_std, best_resp) >=
                                   detail::mixing_q(-best_model.weights, x_std,
                                                    best_resp)
                               ? w_new
                               : -best_model.weights;
    }
    m_step_hyper(stats, best_resp, best_model, config.hyper_opt);
    best_resp = e_step(stats, best_model, xp, threads);
  }

  result.model = std::move(best_model);
  result.resp = std::move(best_resp);
  result.trace = std::move(best_trace);
  return result;
}

}  // namespace badgeinf
