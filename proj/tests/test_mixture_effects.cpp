#include <gtest/gtest.h>

#include "support.hpp"

using namespace transition_att;
using fixtures::max_abs;
using fixtures::random_panel;

namespace {

PosteriorMatrix random_posteriors(int n, int J, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  PosteriorMatrix p(n, J);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < J; ++j) p(i, j) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

TEST(Ltatt, SingleTypeEqualsTi) {
  for (int s = 0; s < 5; ++s) {
    const auto data = random_panel(200 + s, 400, 2 + s % 3, 5, 3);
    const PosteriorMatrix ones = PosteriorMatrix::Ones(data.num_units(), 1);
    for (int lag = 1; lag <= 2; ++lag) {
      const CellOptions drop{EmptyCellPolicy::kDrop};
      const auto a = ltatt(data, ones, 0, lag, drop);
      const auto b = ti_att(data, lag, drop);
      for (std::size_t q = 0; q < a.periods.size(); ++q) {
        EXPECT_LT(max_abs(a.periods[q].effect, b.periods[q].effect), 1e-12);
      }
      const auto agg = att_aggregate(data, ones, {a});
      for (std::size_t q = 0; q < a.periods.size(); ++q) {
        EXPECT_LT(max_abs(agg.periods[q].effect, a.periods[q].effect), 1e-12);
      }
    }
  }
}

TEST(Ltatt, HardAssignmentEqualsSubsample) {
  const auto data = random_panel(300, 1200, 2, 4, 2);
  PosteriorMatrix post = PosteriorMatrix::Zero(data.num_units(), 2);
  std::vector<int> first, second;
  for (int i = 0; i < data.num_units(); ++i) {
    const int j = i % 3 == 0 ? 1 : 0;
    post(i, j) = 1.0;
    (j == 0 ? first : second).push_back(i);
  }
  const auto l0 = ltatt(data, post, 0, 1);
  const auto l1 = ltatt(data, post, 1, 1);
  const auto t0 = ti_att(subset_units(data, first), 1);
  const auto t1 = ti_att(subset_units(data, second), 1);
  for (int t = 3; t <= 4; ++t) {
    EXPECT_LT(max_abs(l0.at(t).effect, t0.at(t).effect), 1e-12);
    EXPECT_LT(max_abs(l1.at(t).effect, t1.at(t).effect), 1e-12);
  }
}

TEST(Aggregate, WeightedLtatt) {
  const auto data = random_panel(301, 600, 3, 5, 3);
  const auto post = random_posteriors(data.num_units(), 3, 1);
  const auto me = mixture_effects(data, post, 1);
  EXPECT_NEAR(fixtures::sum(me.weights), 1.0, 1e-12);
  for (std::size_t q = 0; q < me.aggregate.periods.size(); ++q) {
    std::vector<double> expect(3, 0.0);
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) expect[k] += me.weights[j] * me.types[j].periods[q].effect[k];
    }
    EXPECT_LT(max_abs(expect, me.aggregate.periods[q].effect), 1e-12);
    EXPECT_NEAR(fixtures::sum(me.aggregate.periods[q].effect), 0.0, 1e-12);
  }
  // theta is laid out (types, aggregate) x periods x categories
  const auto theta = me.theta();
  ASSERT_EQ(theta.size(), 4u * 2u * 3u);
  EXPECT_EQ(theta[(1 * 2 + 1) * 3 + 2], me.types[1].periods[1].effect[2]);
  EXPECT_EQ(theta[(3 * 2 + 0) * 3 + 0], me.aggregate.periods[0].effect[0]);
}

TEST(Aggregate, EqualPosteriorsAverage) {
  const auto data = random_panel(302, 300, 2, 4, 2);
  const PosteriorMatrix post = PosteriorMatrix::Constant(data.num_units(), 2, 0.5);
  const auto me = mixture_effects(data, post, 1);
  EXPECT_NEAR(me.weights[0], 0.5, 1e-15);
  for (std::size_t q = 0; q < me.aggregate.periods.size(); ++q) {
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(me.aggregate.periods[q].effect[k],
                  0.5 * (me.types[0].periods[q].effect[k] + me.types[1].periods[q].effect[k]), 1e-15);
    }
  }
}

TEST(TypeFlows, SingleTypeAndAggregation) {
  const auto data = random_panel(303, 800, 3, 5, 3);
  const PosteriorMatrix ones = PosteriorMatrix::Ones(data.num_units(), 1);
  const auto a = type_flow_decomposition(data, ones, 0, 1, 4);
  const auto b = flow_decomposition(data, 1, 4);
  ASSERT_EQ(a.channels.size(), b.channels.size());
  for (std::size_t c = 0; c < a.channels.size(); ++c) {
    EXPECT_NEAR(a.channels[c].inflow, b.channels[c].inflow, 1e-15);
    EXPECT_NEAR(a.channels[c].outflow, b.channels[c].outflow, 1e-15);
  }

  const auto post = random_posteriors(data.num_units(), 2, 2);
  const auto me = mixture_effects(data, post, 1);
  for (int t = 4; t <= 5; ++t) {
    for (int k = 0; k < 3; ++k) {
      double combined = 0.0;
      for (int j = 0; j < 2; ++j) combined += me.weights[j] * type_flow_decomposition(data, post, j, k, t).net;
      EXPECT_NEAR(combined, me.aggregate.at(t).effect[k], 1e-10);
    }
  }
}

TEST(TypeFlows, NoEffectWithinType) {
  // every treated path has a control twin with the same posterior
  PanelInit init;
  init.alphabet = OutcomeAlphabet::generic(2);
  init.num_periods = 3;
  init.num_pre_periods = 1;
  const std::vector<std::vector<int>> paths = {{0, 1, 1}, {1, 0, 1}, {0, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  for (int d = 0; d < 2; ++d) {
    for (const auto& p : paths) {
      init.outcomes.insert(init.outcomes.end(), p.begin(), p.end());
      init.treated.push_back(static_cast<std::uint8_t>(d));
    }
  }
  const PanelDataset data(init);
  const auto half = random_posteriors(5, 2, 3);
  PosteriorMatrix post(10, 2);
  post << half, half;
  for (int j = 0; j < 2; ++j) {
    const auto fd = type_flow_decomposition(data, post, j, 0, 2);
    for (const auto& c : fd.channels) {
      EXPECT_NEAR(c.inflow, 0.0, 1e-15);
      EXPECT_NEAR(c.outflow, 0.0, 1e-15);
    }
  }
}

TEST(TypePreTransitions, SingleTypeMatchesNonparametric) {
  const auto data = random_panel(304, 500, 2, 5, 3);
  const auto a = type_pre_transitions(data, PosteriorMatrix::Ones(data.num_units(), 1));
  const auto b = pre_transition_differences(data);
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(a[0].cells.size(), b.cells.size());
  for (std::size_t c = 0; c < b.cells.size(); ++c) {
    ASSERT_EQ(a[0].cells[c].difference.has_value(), b.cells[c].difference.has_value());
    if (b.cells[c].difference) EXPECT_NEAR(*a[0].cells[c].difference, *b.cells[c].difference, 1e-15);
  }
}

TEST(Ltatt, EmptyWeightedCell) {
  const auto data = random_panel(305, 200, 2, 4, 2);
  PosteriorMatrix post = PosteriorMatrix::Zero(data.num_units(), 2);
  post.col(0).setOnes();
  for (int i = 0; i < data.num_units(); ++i) {
    if (!data.treated(i)) {
      post(i, 0) = 0.0;
      post(i, 1) = 1.0;
    }
  }
  // type 1 has no control weight anywhere
  try {
    ltatt(data, post, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyWeightedCell);
  }
}
