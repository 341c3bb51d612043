#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "badgeinf/eval.hpp"
#include "badgeinf/nhst.hpp"
#include "badgeinf/synthgen.hpp"

using namespace badgeinf;

TEST_CASE("intensity draws match the protocol moments") {
  RngStream rng(5, 0);
  const int n = 100000;

  double mean0 = 0.0, m2 = 0.0;
  for (int i = 1; i <= n; ++i) {
    double x = sample_intensities(0, 0.0, rng).lambda0;
    double d = x - mean0;
    mean0 += d / i;
    m2 += d * (x - mean0);
  }
  CHECK(mean0 == Catch::Approx(10.0).margin(0.15));
  CHECK(m2 / (n - 1) == Catch::Approx(25.0).margin(1.5));

  double mean_b = 0.0, mean_a = 0.0;
  for (int i = 1; i <= n; ++i) {
    auto rec = sample_intensities(1, 2.0, rng);
    mean_b += (rec.lambda1_before - mean_b) / i;
    mean_a += (rec.lambda1_after - mean_a) / i;
  }
  CHECK(mean_a == Catch::Approx(8.0).margin(0.2));
  CHECK(mean_b == Catch::Approx(12.0).margin(0.2));

  auto rec = sample_intensities(1, 0.0, rng);
  CHECK(rec.lambda1_before == rec.lambda1_after);

  CHECK_THROWS_AS(sample_intensities(1, 10.0, rng), std::invalid_argument);
}

TEST_CASE("badge placement follows the 100-events rule") {
  RngStream rng(6, 0);
  IntensityRecord r0;
  r0.label = 0;
  r0.lambda0 = 10.0;
  CHECK(place_badge(r0, rng).badge == Catch::Approx(10.0));

  IntensityRecord r1;
  r1.label = 1;
  r1.lambda1_before = 12.5;
  r1.lambda1_after = 8.0;
  CHECK(place_badge(r1, rng).badge == Catch::Approx(8.0));

  double ratio_mean = 0.0;
  for (int i = 1; i <= 10000; ++i) {
    BadgeWindow w = place_badge(r0, rng);
    CHECK(w.end >= w.badge);
    CHECK(w.end <= 2.0 * w.badge);
    ratio_mean += (w.end / w.badge - ratio_mean) / i;
  }
  CHECK(ratio_mean == Catch::Approx(1.5).margin(0.01));
}

TEST_CASE("trace sampling hits piecewise Poisson means") {
  RngStream rng(7, 0);
  IntensityRecord r0;
  r0.label = 0;
  r0.lambda0 = 10.0;
  BadgeWindow w{0.0, 10.0, 20.0};

  double mean = 0.0;
  for (int i = 1; i <= 200; ++i)
    mean += (static_cast<double>(sample_trace(r0, w, 0.0, rng).size()) - mean) / i;
  CHECK(mean == Catch::Approx(200.0).margin(3.0));

  IntensityRecord r1;
  r1.label = 1;
  r1.lambda1_before = 12.0;
  r1.lambda1_after = 8.0;
  double before = 0.0, after = 0.0;
  for (int i = 1; i <= 200; ++i) {
    auto ev = sample_trace(r1, w, 0.0, rng);
    double nb = 0, na = 0;
    for (double t : ev) (t <= w.badge ? nb : na) += 1;
    before += (nb - before) / i;
    after += (na - after) / i;
  }
  // 3 sigma of the mean over 200 draws
  CHECK(before == Catch::Approx(120.0).margin(2.4));
  CHECK(after == Catch::Approx(80.0).margin(1.9));
}

TEST_CASE("covariate means and eigen structure") {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 1.0, 1.0, 2.0;
  CovariateContext ctx = make_covariate_context(sigma);
  CHECK(ctx.s_max == Catch::Approx(3.0));
  CHECK(ctx.v_max[0] == Catch::Approx(1.0 / std::sqrt(2.0)));
  CHECK(ctx.v_max[1] == Catch::Approx(1.0 / std::sqrt(2.0)));

  RngStream rng(8, 0);
  Eigen::Vector2d mean1 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov1 = Eigen::Matrix2d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = sample_covariates(1, 0.5, ctx, rng);
    mean1 += x;
    cov1 += x * x.transpose();
  }
  mean1 /= n;
  cov1 = cov1 / n - mean1 * mean1.transpose();
  Eigen::Vector2d expected = 0.5 * 3.0 * ctx.v_max;
  CHECK(mean1[0] == Catch::Approx(expected[0]).margin(0.02));
  CHECK(mean1[1] == Catch::Approx(expected[1]).margin(0.02));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      CHECK(cov1(r, c) == Catch::Approx(sigma(r, c)).epsilon(0.05));

  // delta_x = 0 collapses both classes onto the same distribution
  Eigen::Vector2d mean0 = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) mean0 += sample_covariates(0, 0.0, ctx, rng);
  mean0 /= n;
  CHECK(mean0.norm() < 0.03);
}

TEST_CASE("generate_dataset shape, validity and determinism") {
  SyntheticConfig cfg;
  cfg.num_users = 1000;
  cfg.pi = 0.5;
  cfg.delta_lambda = 1.0;
  cfg.delta_x = 1.0;
  cfg.seed = 99;
  SyntheticDataset a = generate_dataset(cfg);
  CHECK(a.traced_users.size() == 500);
  CHECK(a.feature_only_users.size() == 500);

  int labels = 0;
  for (const auto& t : a.traced_users) {
    t.validate();
    labels += t.truth.value_or(0);
  }
  for (const auto& f : a.feature_only_users) labels += f.truth.value_or(0);
  CHECK(std::fabs(labels - 500.0) <= 47.0);  // 3 sigma binomial

  SyntheticDataset b = generate_dataset(cfg);
  REQUIRE(a.traced_users.size() == b.traced_users.size());
  for (std::size_t i = 0; i < a.traced_users.size(); ++i) {
    CHECK(a.traced_users[i].events == b.traced_users[i].events);
    CHECK(a.traced_users[i].badge_time == b.traced_users[i].badge_time);
    CHECK(a.traced_users[i].covariates == b.traced_users[i].covariates);
  }
  CHECK(a.sigma == b.sigma);
}

TEST_CASE("no badge effect leaves trace populations exchangeable") {
  // a trace-based detector must hover at chance over repeats
  double mean_auc = 0.0;
  int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    SyntheticConfig cfg;
    cfg.num_users = 240;
    cfg.pi = 0.5;
    cfg.delta_lambda = 0.0;
    cfg.delta_x = 0.0;
    cfg.seed = 1234 + rep;
    SyntheticDataset ds = generate_dataset(cfg);
    BootstrapConfig bc;
    bc.rng = RngStream(5 + rep, 0);
    auto outcomes = run_tests(ds.traced_users, bc, false, 2);
    std::vector<double> scores;
    std::vector<int> truth;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      scores.push_back(1.0 - outcomes[i].p_theoretic);
      truth.push_back(ds.traced_users[i].truth.value_or(0));
    }
    mean_auc += auc(scores, truth) / reps;
  }
  CHECK(mean_auc >= 0.43);
  CHECK(mean_auc <= 0.57);
}

TEST_CASE("trend raises late-window event rates by the predicted ratio") {
  RngStream rng(9, 0);
  const double trend = 0.2;
  double sum_first = 0.0, sum_second = 0.0;
  double exp_first = 0.0, exp_second = 0.0;
  for (int i = 0; i < 400; ++i) {
    RngStream ur = rng.derive(i);
    IntensityRecord rec = sample_intensities(0, 0.0, ur);
    BadgeWindow w = place_badge(rec, ur);
    auto ev = sample_trace(rec, w, trend, ur);
    double half = w.end / 2.0;
    for (double t : ev) (t < half ? sum_first : sum_second) += 1.0;
    // integral of lambda (1 + A t) over each half window
    exp_first += rec.lambda0 * half * (1.0 + trend * w.end / 4.0);
    exp_second += rec.lambda0 * half * (1.0 + trend * 3.0 * w.end / 4.0);
  }
  CHECK(sum_second > sum_first);
  double ratio = sum_second / sum_first;
  double expected = exp_second / exp_first;
  CHECK(ratio == Catch::Approx(expected).epsilon(0.05));
}
