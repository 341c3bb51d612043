#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "badgeinf/model.hpp"
#include "badgeinf/nhst.hpp"
#include "badgeinf/poisson_em.hpp"
#include "badgeinf/refine_gmm.hpp"
#include "badgeinf/special.hpp"
#include "badgeinf/synthgen.hpp"

namespace badgeinf {

// Mann-Whitney AUC with ties counted half. Requires both classes present.
inline double auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: size mismatch");
  const std::size_t n = scores.size();
  long n_pos = 0;
  for (int l : labels) n_pos += (l != 0);
  long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] != 0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Agreement fraction of two binary call vectors plus the one-sided exact
// binomial tail P(X >= k) under the fair-coin null.
struct AgreementResult {
  double agreement = 0.0;
  double p_value = 1.0;
};

inline AgreementResult agreement_test(const std::vector<int>& calls_a,
                                      const std::vector<int>& calls_b) {
  if (calls_a.size() != calls_b.size() || calls_a.empty())
    throw std::invalid_argument("agreement_test: bad input lengths");
  int k = 0;
  for (std::size_t i = 0; i < calls_a.size(); ++i)
    k += ((calls_a[i] != 0) == (calls_b[i] != 0));
  int n = static_cast<int>(calls_a.size());
  return {static_cast<double>(k) / n, binomial_tail(n, k, 0.5)};
}

// Per-covariate symmetrized KL divergence between class-conditional
// univariate Gaussians, classes split by thresholding the scores.
struct CovariateKl {
  int covariate = 0;
  double kl = 0.0;
  double mean0 = 0.0;
  double mean1 = 0.0;
};

inline std::vector<CovariateKl> kl_rank_covariates(
    const Eigen::MatrixXd& covariates, const std::vector<double>& scores,
    double threshold = 0.5) {
  if (static_cast<std::size_t>(covariates.rows()) != scores.size())
    throw std::invalid_argument("kl_rank_covariates: size mismatch");
  std::vector<Eigen::Index> cls0, cls1;
  for (Eigen::Index i = 0; i < covariates.rows(); ++i)
    (scores[i] > threshold ? cls1 : cls0).push_back(i);
  if (cls0.empty() || cls1.empty())
    throw std::invalid_argument("kl_rank_covariates: a class is empty");

  auto moments = [&](const std::vector<Eigen::Index>& idx, Eigen::Index j) {
    double mean = 0.0;
    for (Eigen::Index i : idx) mean += covariates(i, j);
    mean /= static_cast<double>(idx.size());
    double var = 0.0;
    for (Eigen::Index i : idx) {
      double d = covariates(i, j) - mean;
      var += d * d;
    }
    var /= std::max<double>(1.0, static_cast<double>(idx.size() - 1));
    return std::pair<double, double>{mean, std::max(var, 1e-12)};
  };

  std::vector<CovariateKl> out;
  for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
    auto [m0, v0] = moments(cls0, j);
    auto [m1, v1] = moments(cls1, j);
    auto kl_dir = [](double ma, double va, double mb, double vb) {
      return 0.5 * (std::log(vb / va) + (va + (ma - mb) * (ma - mb)) / vb - 1.0);
    };
    CovariateKl row;
    row.covariate = static_cast<int>(j);
    row.kl = 0.5 * (kl_dir(m0, v0, m1, v1) + kl_dir(m1, v1, m0, v0));
    row.mean0 = m0;
    row.mean1 = m1;
    out.push_back(row);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CovariateKl& a, const CovariateKl& b) {
                     return a.kl > b.kl;
                   });
  return out;
}

// ---------------------------------------------------------------------------
// Method orchestration
// ---------------------------------------------------------------------------

enum class Method {
  PoissonEm,
  NhstTheoretic,
  NhstBootstrap,
  TwoPhaseTheoretic,
  TwoPhaseBootstrap,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::PoissonEm: return "poisson_em";
    case Method::NhstTheoretic: return "nhst_theoretic";
    case Method::NhstBootstrap: return "nhst_bootstrap";
    case Method::TwoPhaseTheoretic: return "two_phase_theoretic";
    case Method::TwoPhaseBootstrap: return "two_phase_bootstrap";
  }
  return "unknown";
}

inline Method method_from_name(const std::string& name) {
  for (Method m : {Method::PoissonEm, Method::NhstTheoretic,
                   Method::NhstBootstrap, Method::TwoPhaseTheoretic,
                   Method::TwoPhaseBootstrap})
    if (name == method_name(m)) return m;
  throw std::invalid_argument("unknown method name: " + name);
}

struct PipelineConfig {
  EmConfig em;
  BootstrapConfig bootstrap;
  GroupPriorConfig refine;
  bool co_clustering = false;  // raw co-clustering prediction instead of the
                               // downstream classifier
};

// Scores aligned with the traced and feature-only user lists. Validation
// scores rank badge holders by inferred influence; prediction scores cover
// covariate-only users when the method supports them.
struct MethodScores {
  std::vector<double> validation;
  std::vector<double> prediction;
  bool has_prediction = false;
};

inline MethodScores run_method(Method method,
                               const std::vector<UserTrace>& traced,
                               const std::vector<FeatureUser>& feature_only,
                               const PipelineConfig& cfg, RngStream rng,
                               int threads = 0) {
  MethodScores out;
  switch (method) {
    case Method::PoissonEm: {
      auto fit = fit_poisson_mixture(traced, cfg.em, /*covariate_mode=*/true,
                                     rng.derive(1), threads);
      out.validation.assign(traced.size(), 0.5);
      for (std::size_t i = 0; i < fit.fitted_indices.size(); ++i)
        out.validation[fit.fitted_indices[i]] = fit.resp.gamma[i];
      out.has_prediction = true;
      out.prediction.reserve(feature_only.size());
      for (const auto& f : feature_only)
        out.prediction.push_back(
            predict_new_user(fit.model, f.covariates).probability);
      return out;
    }
    case Method::NhstTheoretic:
    case Method::NhstBootstrap: {
      bool boot = method == Method::NhstBootstrap;
      BootstrapConfig bc = cfg.bootstrap;
      bc.rng = rng.derive(2);
      auto outcomes = run_tests(traced, bc, boot, threads);
      out.validation.reserve(outcomes.size());
      for (const auto& o : outcomes) {
        double p = 1.0;
        if (o.testable) {
          if (boot)
            p = o.p_bootstrap ? *o.p_bootstrap : 1.0;
          else
            p = o.p_theoretic;
        }
        out.validation.push_back(1.0 - p);
      }
      return out;
    }
    case Method::TwoPhaseTheoretic:
    case Method::TwoPhaseBootstrap: {
      bool boot = method == Method::TwoPhaseBootstrap;
      BootstrapConfig bc = cfg.bootstrap;
      bc.rng = rng.derive(2);
      auto outcomes = run_tests(traced, bc, boot, threads);

      const Eigen::Index d =
          traced.empty() ? 0 : traced.front().covariates.size();
      std::vector<Group> groups;
      Eigen::Index rows = static_cast<Eigen::Index>(traced.size());
      bool with_x = cfg.co_clustering;
      if (with_x) rows += static_cast<Eigen::Index>(feature_only.size());
      Eigen::MatrixXd x(rows, d);
      for (std::size_t i = 0; i < traced.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = traced[i].covariates.transpose();
        groups.push_back(outcomes[i].group == TestGroup::Positive ? Group::P
                                                                  : Group::N);
      }
      if (with_x)
        for (std::size_t i = 0; i < feature_only.size(); ++i) {
          x.row(static_cast<Eigen::Index>(traced.size() + i)) =
              feature_only[i].covariates.transpose();
          groups.push_back(Group::X);
        }

      auto fit = fit_semisupervised(x, groups, cfg.refine, rng.derive(3),
                                    threads);
      out.validation.reserve(traced.size());
      for (std::size_t i = 0; i < traced.size(); ++i)
        out.validation.push_back(
            influence_score(fit.model, traced[i].covariates, groups[i]));

      out.has_prediction = true;
      out.prediction.reserve(feature_only.size());
      if (cfg.co_clustering) {
        for (const auto& f : feature_only)
          out.prediction.push_back(
              influence_score(fit.model, f.covariates, Group::X));
      } else {
        Eigen::MatrixXd x_traced = x.topRows(traced.size());
        std::vector<Group> g_traced(groups.begin(),
                                    groups.begin() + traced.size());
        Eigen::VectorXd w =
            train_downstream_classifier(fit.model, x_traced, g_traced);
        for (const auto& f : feature_only)
          out.prediction.push_back(
              downstream_predict(fit.model, w, f.covariates));
      }
      return out;
    }
  }
  throw std::logic_error("run_method: unhandled method");
}

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

struct ExperimentGrid {
  std::vector<double> delta_lambda{0.0};
  std::vector<double> delta_x{0.0};
  std::vector<double> pi{0.5};
  std::vector<double> trend{0.0};
  int repeats = 20;
  int num_users = 1000;
  std::vector<Method> methods{Method::PoissonEm, Method::NhstTheoretic,
                              Method::NhstBootstrap, Method::TwoPhaseTheoretic,
                              Method::TwoPhaseBootstrap};

  void validate() const {
    if (repeats < 1) throw std::invalid_argument("ExperimentGrid: repeats >= 1");
    if (delta_lambda.empty() || delta_x.empty() || pi.empty() || trend.empty())
      throw std::invalid_argument("ExperimentGrid: empty axis");
    if (methods.empty())
      throw std::invalid_argument("ExperimentGrid: no methods");
    if (num_users < 2 || num_users % 2 != 0)
      throw std::invalid_argument("ExperimentGrid: N must be even and >= 2");
  }
};

struct MethodCellStats {
  Method method = Method::PoissonEm;
  int completed = 0;
  int failures = 0;
  double validation_mean = std::numeric_limits<double>::quiet_NaN();
  double validation_se = std::numeric_limits<double>::quiet_NaN();
  bool has_prediction = false;
  double prediction_mean = std::numeric_limits<double>::quiet_NaN();
  double prediction_se = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> validation_aucs;
  std::vector<double> prediction_aucs;
};

struct CellResult {
  double delta_lambda = 0.0;
  double delta_x = 0.0;
  double pi = 0.5;
  double trend = 0.0;
  std::vector<MethodCellStats> methods;
};

struct EvalReport {
  ExperimentGrid grid;
  std::vector<CellResult> cells;
};

namespace detail {

inline std::uint64_t hash_u64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

inline std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return hash_u64(h, bits);
}

inline void mean_se(const std::vector<double>& xs, double* mean, double* se) {
  if (xs.empty()) {
    *mean = *se = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double m = 0.0;
  for (double v : xs) m += v;
  m /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double v : xs) var += (v - m) * (v - m);
  var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
  *mean = m;
  *se = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace detail

// Runs every (cell, repeat, method) combination. Dataset seeds are keyed by
// the cell coordinates and repeat index, so results do not depend on the
// order in which cells execute. A failing method records the failure and the
// run continues.
inline EvalReport run_grid(const ExperimentGrid& grid,
                           const PipelineConfig& pipeline, std::uint64_t seed,
                           int threads = 0) {
  grid.validate();
  EvalReport report;
  report.grid = grid;

  for (double dl : grid.delta_lambda)
    for (double dx : grid.delta_x)
      for (double pi : grid.pi)
        for (double trend : grid.trend) {
          CellResult cell;
          cell.delta_lambda = dl;
          cell.delta_x = dx;
          cell.pi = pi;
          cell.trend = trend;

          std::uint64_t cell_key = detail::hash_double(
              detail::hash_double(
                  detail::hash_double(detail::hash_double(0x9e37ull, dl), dx),
                  pi),
              trend);

          for (Method m : grid.methods) {
            MethodCellStats stats;
            stats.method = m;
            cell.methods.push_back(stats);
          }

          for (int rep = 0; rep < grid.repeats; ++rep) {
            SyntheticConfig scfg;
            scfg.num_users = grid.num_users;
            scfg.pi = pi;
            scfg.delta_lambda = dl;
            scfg.delta_x = dx;
            scfg.trend = trend;
            scfg.seed = detail::hash_u64(detail::hash_u64(cell_key, seed),
                                         static_cast<std::uint64_t>(rep));
            SyntheticDataset ds = generate_dataset(scfg);

            std::vector<int> truth_traced, truth_feature;
            for (const auto& t : ds.traced_users)
              truth_traced.push_back(t.truth.value_or(0));
            for (const auto& f : ds.feature_only_users)
              truth_feature.push_back(f.truth.value_or(0));

            for (std::size_t mi = 0; mi < grid.methods.size(); ++mi) {
              MethodCellStats& stats = cell.methods[mi];
              try {
                RngStream method_rng =
                    RngStream(scfg.seed, 1000 + static_cast<std::uint64_t>(mi));
                MethodScores scores =
                    run_method(grid.methods[mi], ds.traced_users,
                               ds.feature_only_users, pipeline, method_rng,
                               threads);
                stats.validation_aucs.push_back(
                    auc(scores.validation, truth_traced));
                if (scores.has_prediction) {
                  stats.has_prediction = true;
                  stats.prediction_aucs.push_back(
                      auc(scores.prediction, truth_feature));
                }
                ++stats.completed;
              } catch (const std::exception&) {
                ++stats.failures;
              }
            }
          }

          for (auto& stats : cell.methods) {
            detail::mean_se(stats.validation_aucs, &stats.validation_mean,
                            &stats.validation_se);
            if (stats.has_prediction)
              detail::mean_se(stats.prediction_aucs, &stats.prediction_mean,
                              &stats.prediction_se);
          }
          report.cells.push_back(std::move(cell));
        }
  return report;
}

}  // namespace badgeinf
