#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "badgeinf/nhst.hpp"
#include "badgeinf/synthgen.hpp"

using namespace badgeinf;

namespace {

TraceStats make_stats(long n, double l, long n0, double l0, long n1, double l1) {
  TraceStats s;
  s.n = n;
  s.l = l;
  s.n0 = n0;
  s.l0 = l0;
  s.n1 = n1;
  s.l1 = l1;
  s.has_badge = true;
  return s;
}

}  // namespace

TEST_CASE("llr_statistic analytic values") {
  CHECK(llr_statistic(make_stats(4, 2, 2, 1, 2, 1)) ==
        Catch::Approx(0.0).margin(1e-12));
  CHECK(llr_statistic(make_stats(4, 2, 3, 1, 1, 1)) ==
        Catch::Approx(4 * std::log(2.0) - 3 * std::log(3.0)).margin(1e-10));
  CHECK(llr_statistic(make_stats(4, 2, 4, 1, 0, 1)) ==
        Catch::Approx(-4 * std::log(2.0)).margin(1e-10));
  CHECK_THROWS_AS(llr_statistic(make_stats(4, 2, 4, 2, 0, 0)),
                  std::invalid_argument);
}

TEST_CASE("llr_statistic is never positive under fuzzing") {
  RngStream rng(404, 0);
  for (int rep = 0; rep < 20000; ++rep) {
    double l0 = rng.uniform(0.01, 20.0);
    double l1 = rng.uniform(0.01, 20.0);
    long n0 = static_cast<long>(rng.uniform_index(200));
    long n1 = static_cast<long>(rng.uniform_index(200));
    auto s = make_stats(n0 + n1, l0 + l1, n0, l0, n1, l1);
    CHECK(llr_statistic(s) <= 0.0);
  }
}

TEST_CASE("theoretic_pvalue matches the chi-square quantiles") {
  CHECK(theoretic_pvalue(0.0) == 1.0);
  CHECK(theoretic_pvalue(-0.5232) == Catch::Approx(0.306).margin(0.003));
  CHECK(theoretic_pvalue(-1.9205) == Catch::Approx(0.050).margin(0.001));
  CHECK_THROWS_AS(theoretic_pvalue(0.1), std::domain_error);

  double prev = 0.0;
  for (double llr = -8.0; llr <= 0.0; llr += 0.05) {
    double p = theoretic_pvalue(llr);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("virtual badge sampling region and window rules") {
  UserTrace t;
  t.user_id = "u";
  t.start = 0.0;
  t.end = 10.0;
  t.badge_time = 5.0;
  t.events = {0.4, 1.1, 2.2, 3.3, 4.4, 5.5, 6.6, 7.7, 8.8};

  RngStream rng(1, 1);
  int left = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    VirtualBadge vb = sample_virtual_badge(t, 1.0, rng);
    if (vb.badge < 5.0) {
      ++left;
      CHECK(vb.start == 0.0);
      CHECK(vb.end == 4.0);
      CHECK(vb.badge <= 4.0);
      for (double e : vb.events) CHECK(e <= 4.0);
    } else {
      CHECK(vb.start == 6.0);
      CHECK(vb.end == 10.0);
      CHECK(vb.badge >= 6.0);
      for (double e : vb.events) CHECK(e >= 6.0);
    }
  }
  // both halves carry mass 4/8; allow ~3 sigma
  CHECK(std::fabs(left / static_cast<double>(draws) - 0.5) <= 0.015);
}

TEST_CASE("virtual badge degenerate region throws") {
  UserTrace t;
  t.user_id = "u";
  t.start = 0.0;
  t.end = 1.0;
  t.badge_time = 0.5;
  RngStream rng(1, 2);
  CHECK_THROWS_AS(sample_virtual_badge(t, 0.6, rng), std::runtime_error);
}

TEST_CASE("bootstrap p-value counting semantics") {
  // zero observed statistic is the least extreme possible value
  UserTrace flat;
  flat.user_id = "flat";
  flat.start = 0.0;
  flat.end = 4.0;
  flat.badge_time = 2.0;
  flat.events = {};  // no events: every LLR is exactly 0
  BootstrapConfig cfg;
  cfg.num_replicates = 50;
  cfg.rng = RngStream(9, 0);
  cfg.margin = 0.25;
  CHECK(bootstrap_pvalue(flat, cfg) == 1.0);
}

TEST_CASE("bootstrap p-values are calibrated on null users") {
  // constant-rate users: p over the population should be near-uniform
  SyntheticConfig scfg;
  scfg.num_users = 400;
  scfg.pi = 0.0;  // all i_u = 0
  scfg.delta_lambda = 0.0;
  scfg.seed = 321;
  SyntheticDataset ds = generate_dataset(scfg);

  BootstrapConfig cfg;
  cfg.num_replicates = 200;
  cfg.rng = RngStream(17, 0);
  auto outcomes = run_tests(ds.traced_users, cfg, true, 2);

  std::vector<double> ps;
  int rejects = 0;
  for (const auto& o : outcomes) {
    REQUIRE(o.testable);
    REQUIRE(o.p_bootstrap.has_value());
    ps.push_back(*o.p_bootstrap);
    if (*o.p_bootstrap < 0.05) ++rejects;
  }
  CHECK(ks_uniform_pvalue(ps) > 0.01);
  double rate = rejects / static_cast<double>(ps.size());
  CHECK(rate >= 0.01);
  CHECK(rate <= 0.09);
}

TEST_CASE("classification uses a strict threshold") {
  std::vector<TestOutcome> outcomes(3);
  for (auto& o : outcomes) o.testable = true;
  outcomes[0].p_theoretic = 0.01;
  outcomes[1].p_theoretic = 0.05;
  outcomes[2].p_theoretic = 0.30;
  classify(outcomes, 0.05, false);
  CHECK(outcomes[0].group == TestGroup::Positive);
  CHECK(outcomes[1].group == TestGroup::Negative);
  CHECK(outcomes[2].group == TestGroup::Negative);
}

TEST_CASE("untestable users are reported, not dropped") {
  std::vector<UserTrace> traces(2);
  traces[0].user_id = "nobadge";
  traces[0].start = 0.0;
  traces[0].end = 2.0;
  traces[0].events = {0.5, 1.0};
  traces[1].user_id = "ok";
  traces[1].start = 0.0;
  traces[1].end = 2.0;
  traces[1].badge_time = 1.0;
  traces[1].events = {0.5, 1.5};
  BootstrapConfig cfg;
  cfg.rng = RngStream(3, 3);
  auto outcomes = run_tests(traces, cfg, false, 1);
  REQUIRE(outcomes.size() == 2);
  CHECK_FALSE(outcomes[0].testable);
  CHECK(outcomes[0].group == TestGroup::Negative);
  CHECK(outcomes[1].testable);
}

TEST_CASE("bootstrap p-value is invariant to translation and dyadic scaling") {
  UserTrace t;
  t.user_id = "shiftme";
  t.start = 0.0;
  t.end = 20.0;
  t.badge_time = 8.0;
  RngStream gen(55, 1);
  for (int i = 0; i < 150; ++i) t.events.push_back(gen.uniform(0.0, 20.0));
  std::sort(t.events.begin(), t.events.end());

  BootstrapConfig cfg;
  cfg.num_replicates = 400;
  cfg.margin = 0.5;
  cfg.rng = RngStream(77, 0);

  double p0 = bootstrap_pvalue(t, cfg);

  UserTrace shifted = t;
  shifted.start += 100.0;
  shifted.end += 100.0;
  *shifted.badge_time += 100.0;
  for (double& e : shifted.events) e += 100.0;
  CHECK(bootstrap_pvalue(shifted, cfg) == p0);

  const double c = 2.0;  // power of two: the rescaling is exact
  UserTrace scaled = t;
  scaled.start *= c;
  scaled.end *= c;
  *scaled.badge_time *= c;
  for (double& e : scaled.events) e *= c;
  BootstrapConfig scfg = cfg;
  scfg.margin = cfg.margin * c;
  CHECK(bootstrap_pvalue(scaled, scfg) == p0);
}
