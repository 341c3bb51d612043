#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "badgeinf/model.hpp"
#include "badgeinf/rng.hpp"
#include "badgeinf/samplers.hpp"

using namespace badgeinf;

namespace {

UserTrace make_trace(double s, double e, std::optional<double> b,
                     std::vector<double> events) {
  UserTrace t;
  t.user_id = "u";
  t.start = s;
  t.end = e;
  t.badge_time = b;
  t.events = std::move(events);
  return t;
}

// Monte-Carlo estimate of log integral Gamma(lambda; a, b) * lambda^n e^(-lambda l)
// d lambda, sharing the dropped n! constant with log_marginal_counts.
double mc_log_marginal(double alpha, double beta, long n, double l,
                       std::size_t draws, RngStream& rng, double* se_out) {
  // E_lambda[ lambda^n e^(-lambda l) ] over the gamma prior
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 1; i <= draws; ++i) {
    double lam = sample_gamma(alpha, beta, rng);
    double v = std::exp(n * std::log(lam) - lam * l);
    double d = v - mean;
    mean += d / static_cast<double>(i);
    m2 += d * (v - mean);
  }
  double var = m2 / (static_cast<double>(draws) - 1.0);
  double se_mean = std::sqrt(var / static_cast<double>(draws));
  *se_out = se_mean / mean;  // delta method on log
  return std::log(mean);
}

}  // namespace

TEST_CASE("compute_stats splits counts and durations at the badge") {
  auto s = compute_stats(make_trace(0, 2, 1.0, {0.2, 0.5, 1.3, 1.9}));
  CHECK(s.l == 2.0);
  CHECK(s.l0 == 1.0);
  CHECK(s.l1 == 1.0);
  CHECK(s.n == 4);
  CHECK(s.n0 == 2);
  CHECK(s.n1 == 2);
  CHECK(s.has_badge);
}

TEST_CASE("compute_stats with no badge and no events") {
  auto s = compute_stats(make_trace(0, 1, std::nullopt, {}));
  CHECK(s.l == 1.0);
  CHECK(s.l0 == 1.0);
  CHECK(s.l1 == 0.0);
  CHECK(s.n == 0);
  CHECK(s.n0 == 0);
  CHECK(s.n1 == 0);
  CHECK_FALSE(s.has_badge);
}

TEST_CASE("events at the badge time count into n1") {
  auto s = compute_stats(make_trace(0, 10, 4.0, {1, 2, 3, 4}));
  CHECK(s.n0 == 3);
  CHECK(s.n1 == 1);
}

TEST_CASE("compute_stats rejects malformed traces") {
  CHECK_THROWS_AS(compute_stats(make_trace(1, 1, std::nullopt, {})),
                  std::invalid_argument);
  CHECK_THROWS_AS(compute_stats(make_trace(0, 2, 1.0, {1.5, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(compute_stats(make_trace(0, 2, 2.0, {})),
                  std::invalid_argument);
}

TEST_CASE("compute_stats additivity on random traces") {
  RngStream rng(99, 0);
  for (int rep = 0; rep < 200; ++rep) {
    double s0 = rng.uniform(-5, 5);
    double len = rng.uniform(0.5, 20);
    double b = s0 + rng.uniform(0.1, 0.9) * len;
    std::vector<double> ev;
    int n = static_cast<int>(rng.uniform_index(50));
    for (int i = 0; i < n; ++i) ev.push_back(rng.uniform(s0, s0 + len));
    std::sort(ev.begin(), ev.end());
    auto st = compute_stats(make_trace(s0, s0 + len, b, ev));
    CHECK(st.n0 + st.n1 == st.n);
    CHECK(st.l0 + st.l1 == Catch::Approx(st.l));
    CHECK(st.l0 >= 0.0);
    CHECK(st.l1 >= 0.0);
  }
}

TEST_CASE("log_marginal_null closed-form values") {
  TraceStats s;
  s.l = 1.0;
  s.n = 0;
  CHECK(log_marginal_null(s, {1.0, 1.0}) == Catch::Approx(std::log(0.5)).epsilon(1e-12));

  s.n = 1;
  CHECK(log_marginal_null(s, {2.0, 1.0}) == Catch::Approx(std::log(0.25)).epsilon(1e-12));

  s.l = 0.0;
  s.n = 0;
  CHECK(log_marginal_null(s, {3.7, 0.9}) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("log_marginal_alt factorizes into two null-style terms") {
  TraceStats s;
  s.has_badge = true;
  s.l0 = 1.0;
  s.l1 = 1.0;
  s.n0 = 0;
  s.n1 = 0;
  CHECK(log_marginal_alt(s, {1, 1}, {1, 1}) ==
        Catch::Approx(2 * std::log(0.5)).epsilon(1e-12));

  s.n0 = 1;
  CHECK(log_marginal_alt(s, {2, 1}, {1, 1}) ==
        Catch::Approx(std::log(0.25) + std::log(0.5)).epsilon(1e-12));

  // degenerate split (l1, n1) = (0, 0) equals the null marginal
  TraceStats whole;
  whole.l = 3.5;
  whole.n = 7;
  TraceStats deg;
  deg.has_badge = true;
  deg.l0 = 3.5;
  deg.n0 = 7;
  deg.l1 = 0.0;
  deg.n1 = 0;
  GammaHyper p{1.4, 0.8};
  CHECK(log_marginal_alt(deg, p, p) ==
        Catch::Approx(log_marginal_null(whole, p)).epsilon(1e-12));

  TraceStats nobadge;
  nobadge.has_badge = false;
  CHECK_THROWS_AS(log_marginal_alt(nobadge, p, p), std::invalid_argument);
}

TEST_CASE("log_marginal_null matches Monte-Carlo integration") {
  RngStream rng(2024, 11);
  const double alphas[] = {0.7, 1.5, 3.0};
  const double betas[] = {0.5, 1.0, 2.0};
  const long ns[] = {0, 2, 5};
  const double ls[] = {0.3, 1.0, 2.5};
  for (double a : alphas)
    for (double b : betas)
      for (long n : ns)
        for (double l : ls) {
          TraceStats s;
          s.l = l;
          s.n = n;
          double exact = log_marginal_null(s, {a, b});
          double se = 0.0;
          double mc = mc_log_marginal(a, b, n, l, 200000, rng, &se);
          INFO("alpha=" << a << " beta=" << b << " n=" << n << " l=" << l);
          CHECK(std::fabs(mc - exact) <= 3.0 * se + 1e-4);
        }
}

TEST_CASE("poisson_loglik conventions") {
  CHECK(poisson_loglik(2.0, 4, 2.0) == Catch::Approx(4 * std::log(2.0) - 4.0));
  CHECK(poisson_loglik(0.0, 0, 5.0) == 0.0);
  CHECK(poisson_loglik(1.0, 0, 3.0) == Catch::Approx(-3.0));
  CHECK(poisson_loglik(0.0, 3, 1.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(poisson_loglik(-1.0, 0, 1.0), std::domain_error);
}
