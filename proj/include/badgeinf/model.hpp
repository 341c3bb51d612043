#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/special.hpp"

namespace badgeinf {

// Threshold badge: introduced at time tau, awarded after the user performs
// `threshold` actions of type `action_type`.
struct BadgeSpec {
  double introduction_time = 0.0;
  std::string action_type;
  int threshold = 1;

  void validate() const {
    if (threshold < 1)
      throw std::invalid_argument("BadgeSpec: threshold must be >= 1");
    if (!std::isfinite(introduction_time))
      throw std::invalid_argument("BadgeSpec: introduction time must be finite");
  }
};

// One user's observation window, action times, badge time (absent when the
// badge was never awarded), covariates, and an optional ground-truth label
// carried only by synthetic data.
struct UserTrace {
  std::string user_id;
  double start = 0.0;
  double end = 0.0;
  std::optional<double> badge_time;  // absent encodes "no badge" (b_u = inf)
  std::vector<double> events;        // sorted ascending, within [start, end]
  Eigen::VectorXd covariates;
  std::optional<int> truth;  // synthetic-only latent label i_u

  bool has_badge() const { return badge_time.has_value(); }

  void validate() const {
    if (!(start < end))
      throw std::invalid_argument("UserTrace " + user_id + ": start must be < end");
    if (badge_time && !(*badge_time > start && *badge_time < end))
      throw std::invalid_argument("UserTrace " + user_id +
                                  ": badge_time must lie inside (start, end)");
    double prev = start;
    for (double t : events) {
      if (t < prev)
        throw std::invalid_argument("UserTrace " + user_id +
                                    ": events must be sorted within [start, end]");
      prev = t;
    }
    if (!events.empty() && events.back() > end)
      throw std::invalid_argument("UserTrace " + user_id +
                                  ": event after window end");
  }
};

// Derived sufficient statistics: window lengths and event counts, split at the
// badge time when present.
struct TraceStats {
  double l = 0.0;   // total window length
  double l0 = 0.0;  // length before the badge
  double l1 = 0.0;  // length at/after the badge
  long n = 0;       // total events
  long n0 = 0;      // events strictly before the badge
  long n1 = 0;      // events at/after the badge
  bool has_badge = false;
};

// Gamma prior on an intensity: shape alpha, rate beta.
struct GammaHyper {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0))
      throw std::invalid_argument("GammaHyper: shape and rate must be positive");
  }
};

inline TraceStats compute_stats(const UserTrace& trace) {
  trace.validate();
  TraceStats s;
  s.l = trace.end - trace.start;
  s.n = static_cast<long>(trace.events.size());
  if (trace.badge_time) {
    double b = *trace.badge_time;
    s.has_badge = true;
    s.l0 = b - trace.start;
    s.l1 = trace.end - b;
    for (double t : trace.events)
      if (t < b) ++s.n0;
    s.n1 = s.n - s.n0;
  } else {
    s.has_badge = false;
    s.l0 = s.l;
    s.l1 = 0.0;
    s.n0 = s.n;
    s.n1 = 0;
  }
  return s;
}

// Log marginal probability of n events over a window of length l with the
// intensity integrated out against Gamma(alpha, beta):
//   log[ beta^alpha / (l+beta)^(alpha+n) * Gamma(alpha+n) / Gamma(alpha) ]
// The n!-dependent base measure is dropped; it cancels in every ratio used
// downstream.
inline double log_marginal_counts(double l, long n, const GammaHyper& prior) {
  prior.validate();
  return prior.alpha * std::log(prior.beta) -
         (prior.alpha + n) * std::log(l + prior.beta) +
         log_gamma(prior.alpha + n) - log_gamma(prior.alpha);
}

// log P({t_u} | theta0, i_u = 0): single constant-rate regime over the whole
// window.
inline double log_marginal_null(const TraceStats& stats, const GammaHyper& prior) {
  return log_marginal_counts(stats.l, stats.n, prior);
}

// log P({t_u} | theta1, i_u = 1): independent regimes before and after the
// badge, each with its own gamma prior.
inline double log_marginal_alt(const TraceStats& stats, const GammaHyper& prior0,
                               const GammaHyper& prior1) {
  if (!stats.has_badge)
    throw std::invalid_argument("log_marginal_alt: trace has no badge time");
  return log_marginal_counts(stats.l0, stats.n0, prior0) +
         log_marginal_counts(stats.l1, stats.n1, prior1);
}

// Homogeneous Poisson log-likelihood up to the factorial constant:
// n log(rate) - rate * l, with the (0 log 0) = 0 convention. rate = 0 with
// n > 0 yields -inf rather than an error.
inline double poisson_loglik(double rate, long n, double l) {
  if (rate < 0.0) throw std::domain_error("poisson_loglik: rate must be >= 0");
  if (l < 0.0) throw std::domain_error("poisson_loglik: l must be >= 0");
  if (rate == 0.0)
    return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return n * std::log(rate) - rate * l;
}

}  // namespace badgeinf
