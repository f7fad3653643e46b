#include <gtest/gtest.h>

#include "support.hpp"

using namespace transition_att;
using fixtures::max_abs;
using fixtures::quick_schedule;

namespace {

EstimationConfig config(int J) {
  EstimationConfig cfg;
  cfg.num_types = J;
  cfg.schedule = quick_schedule();
  cfg.topup = MultistartSchedule{10, 2, 10, 1e-6, 500};
  return cfg;
}

BootstrapDraws synthetic_draws(int R, int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  BootstrapDraws d;
  d.B = R;
  d.theta_hat.assign(static_cast<std::size_t>(dim), 0.0);
  d.draws.resize(R, dim);
  for (int r = 0; r < R; ++r) {
    const double common = z(rng);
    for (int c = 0; c < dim; ++c) d.draws(r, c) = (0.5 * common + z(rng)) * (1.0 + c);
  }
  d.sigma = detail::column_sd(d.draws);
  return d;
}

}  // namespace

TEST(DrawWeights, PositiveWithUnitMean) {
  double total = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto w = draw_weights(4, nullptr, 7, static_cast<std::uint64_t>(r));
    ASSERT_EQ(w.size(), 4u);
    for (double x : w) ASSERT_GT(x, 0.0);
    total += fixtures::sum(w);
  }
  EXPECT_NEAR(total / (4.0 * reps), 1.0, 0.02);
}

TEST(DrawWeights, ClustersShareNormalizedWeights) {
  const std::vector<std::string> ids = {"b", "a", "b", "b"};
  const auto w = draw_weights(4, &ids, 3, 1);
  EXPECT_EQ(w[0], w[2]);
  EXPECT_EQ(w[0], w[3]);
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
}

TEST(DrawWeights, Deterministic) {
  EXPECT_EQ(draw_weights(50, nullptr, 5, 9, 1), draw_weights(50, nullptr, 5, 9, 1));
  EXPECT_NE(draw_weights(50, nullptr, 5, 9, 1), draw_weights(50, nullptr, 5, 9, 2));
}

TEST(Replicate, EqualWeightsReproduceEstimate) {
  const auto data = simulate(two_type_effect_spec(3000, 21)).data;
  const auto cfg = config(2);
  const auto point = estimate_point(data, cfg, 3);
  const std::vector<double> ones(static_cast<std::size_t>(data.num_units()), 1.0);
  const auto r = bootstrap_replicate(data, ones, cfg, point.fit.params, 17);
  EXPECT_LT(max_abs(r.theta, point.theta), 1e-8);
  const std::vector<double> twos(static_cast<std::size_t>(data.num_units()), 2.0);
  EXPECT_LT(max_abs(bootstrap_replicate(data, twos, cfg, point.fit.params, 17).theta, point.theta), 1e-8);
}

TEST(Replicate, UpweightingControlStayersRaisesMrEffect) {
  const auto mr = mr_example();
  const auto cfg = config(1);
  const auto point = estimate_point(mr, cfg, 1);
  std::vector<double> zeta(48, 1.0);
  for (int i = 0; i < 48; ++i) {
    if (!mr.treated(i) && mr.outcome(i, 1) == 0 && mr.outcome(i, 2) == 0) zeta[i] = 3.0;
  }
  const auto r = bootstrap_replicate(mr, zeta, cfg, point.fit.params, 1);
  // theta: type 1 (t=2) then aggregate (t=2), categories (unemployed, employed)
  EXPECT_GT(r.theta[1], point.theta[1]);
  const PosteriorMatrix ones = PosteriorMatrix::Ones(48, 1);
  const auto reweighted = ltatt(mr, ones, 0, 1, {}, zeta);
  EXPECT_LT(reweighted.at(2).counterfactual[1], 5.0 / 6.0);
  EXPECT_NEAR(reweighted.at(2).effect[1], r.theta[1], 1e-12);
}

TEST(Bootstrap, DeterministicAcrossWorkers) {
  const auto data = simulate(two_type_effect_spec(1500, 22)).data;
  const auto cfg = config(2);
  const auto point = estimate_point(data, cfg, 3);
  BootstrapOptions a{24, 5, 1}, b{24, 5, 4};
  const auto da = run_bootstrap(data, cfg, point, a);
  const auto db = run_bootstrap(data, cfg, point, b);
  EXPECT_TRUE(da.draws == db.draws);
  EXPECT_EQ(da.sigma, db.sigma);
  EXPECT_EQ(da.replicate_index, db.replicate_index);
  EXPECT_EQ(da.failures, 0);
}

TEST(Bootstrap, Preconditions) {
  const auto mr = mr_example();
  const auto cfg = config(1);
  const auto point = estimate_point(mr, cfg, 1);
  try {
    run_bootstrap(mr, cfg, point, BootstrapOptions{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientReplicates);
  }
  BootstrapOptions clustered{10};
  clustered.cluster = true;
  EXPECT_THROW(run_bootstrap(mr, cfg, point, clustered), Error);
}

TEST(Covariance, ZeroForIdenticalDrawsAndMatchesSigma) {
  BootstrapDraws same;
  same.theta_hat = {1.0, 2.0};
  same.draws = Eigen::MatrixXd::Constant(5, 2, 3.0);
  same.sigma = detail::column_sd(same.draws);
  EXPECT_EQ(covariance(same).cwiseAbs().maxCoeff(), 0.0);

  const auto d = synthetic_draws(400, 4, 1);
  const auto v = covariance(d);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(std::sqrt(v(c, c)), d.sigma[c], 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  BootstrapDraws one = d;
  one.draws = d.draws.topRows(1);
  EXPECT_THROW(covariance(one), Error);
}

TEST(Bands, SingleCoordinateUniformEqualsPointwise) {
  const auto d = synthetic_draws(300, 3, 2);
  const auto b = uniform_bands(d, 0.05, {1});
  ASSERT_EQ(b.coords.size(), 1u);
  EXPECT_EQ(b.coords[0].uniform_lo, b.coords[0].pointwise_lo);
  EXPECT_EQ(b.coords[0].uniform_hi, b.coords[0].pointwise_hi);
}

TEST(Bands, UniformContainsPointwise) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto d = synthetic_draws(250, 5, 10 + s);
    const auto b = uniform_bands(d, 0.1);
    for (const auto& c : b.coords) {
      EXPECT_GE(b.critical_value, c.pointwise_crit);
      EXPECT_LE(c.uniform_lo, c.pointwise_lo);
      EXPECT_GE(c.uniform_hi, c.pointwise_hi);
    }
  }
}

TEST(Bands, OrderStatisticAndDegenerateCoordinates) {
  BootstrapDraws d;
  d.theta_hat = {0.0, 5.0};
  d.draws.resize(20, 2);
  for (int r = 0; r < 20; ++r) {
    d.draws(r, 0) = r - 9.5;
    d.draws(r, 1) = 5.0;
  }
  d.sigma = detail::column_sd(d.draws);
  const auto b = uniform_bands(d, 0.1);
  // |t| values are (0.5..9.5)/sd; the 18th smallest is 8.5/sd
  EXPECT_NEAR(b.critical_value, 8.5 / d.sigma[0], 1e-12);
  EXPECT_EQ(b.coords[1].uniform_lo, 5.0);
  EXPECT_EQ(b.coords[1].uniform_hi, 5.0);
  EXPECT_THROW(uniform_bands(d, 1.5), Error);
}

TEST(Bands, SeriesCoordinates) {
  EXPECT_EQ(series_coordinates(2, 3, 2, 2, 1), (std::vector<int>{13, 15, 17}));
  EXPECT_EQ(series_coordinates(1, 1, 3, 0), (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(series_coordinates(2, 3, 2, 3), Error);
}
