#include <gtest/gtest.h>

#include "support.hpp"

using namespace transition_att;
using fixtures::max_abs;
using fixtures::random_panel;

namespace {

constexpr int kEmployed = 1;

}  // namespace

TEST(MrExample, CounterfactualAndEffects) {
  const auto mr = mr_example();
  const auto table = conditional_counterfactual_mean(mr, 1, 2);
  EXPECT_NEAR(table.counterfactual[kEmployed], 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(table.observed[kEmployed], 0.875, 1e-15);
  EXPECT_NEAR(ti_att(mr, 1).at(2).effect[kEmployed], 1.0 / 24.0, 1e-12);
  EXPECT_EQ(did_att(mr).at(2).effect[kEmployed], -0.125);
  EXPECT_NEAR(did_bias(mr, 1).at(2).effect[kEmployed], -1.0 / 6.0, 1e-12);
}

TEST(MrExample, Flows) {
  const auto fd = flow_decomposition(mr_example(), kEmployed, 2);
  ASSERT_EQ(fd.channels.size(), 1u);
  EXPECT_NEAR(fd.channels[0].inflow, 1.0 / 24.0, 1e-15);
  EXPECT_NEAR(fd.channels[0].outflow, 0.0, 1e-15);
  EXPECT_NEAR(fd.net, 1.0 / 24.0, 1e-15);
  EXPECT_NEAR(fd.residual, 0.0, 1e-15);
}

TEST(MrExample, PlaceboAndPreTrendsNeedPrePeriods) {
  const auto mr = mr_example();
  try {
    placebo_att(mr, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientPrePeriods);
  }
  const auto r = pre_transition_differences(mr);
  EXPECT_TRUE(r.insufficient_pre_periods);
  EXPECT_TRUE(r.cells.empty());
}

TEST(Contributions, SingleHistory) {
  PanelInit init;
  init.alphabet = OutcomeAlphabet::generic(2);
  init.num_periods = 2;
  init.num_pre_periods = 1;
  init.outcomes = {0, 1, 0, 0, 0, 1, 0, 1};
  init.treated = {1, 1, 0, 0};
  const PanelDataset data(init);
  const auto tab = history_contributions(data, 1, 2);
  ASSERT_EQ(tab.rows.size(), 1u);
  EXPECT_EQ(tab.rows[0].weight, 1.0);
  EXPECT_EQ(tab.rows[0].effect, ti_att(data, 1).at(2).effect);
}

TEST(EmptyCells, ErrorAndDrop) {
  // treated unit starting in y1 has no control match
  PanelInit init;
  init.alphabet = OutcomeAlphabet::generic(2);
  init.num_periods = 2;
  init.num_pre_periods = 1;
  init.outcomes = {0, 1, 1, 1, 0, 0, 0, 1};
  init.treated = {1, 1, 0, 0};
  const PanelDataset data(init);
  try {
    ti_att(data, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyControlCell);
  }
  const auto s = ti_att(data, 1, CellOptions{EmptyCellPolicy::kDrop});
  EXPECT_DOUBLE_EQ(s.at(2).dropped_mass, 0.5);
  EXPECT_NEAR(s.at(2).effect[1], 0.5, 1e-15);
  const auto tab = history_contributions(data, 1, 2, CellOptions{EmptyCellPolicy::kDrop});
  ASSERT_EQ(tab.dropped.size(), 1u);
  EXPECT_EQ(tab.dropped[0].states, std::vector<int>{1});
}

TEST(Effects, IdenticalArmsGiveZero) {
  // control units duplicate the treated units exactly
  PanelInit init;
  init.alphabet = OutcomeAlphabet::generic(3);
  init.num_periods = 4;
  init.num_pre_periods = 2;
  const std::vector<std::vector<int>> paths = {{0, 1, 2, 2}, {1, 1, 0, 2}, {2, 0, 0, 1}, {0, 0, 1, 1}};
  for (int d = 0; d < 2; ++d) {
    for (const auto& p : paths) {
      init.outcomes.insert(init.outcomes.end(), p.begin(), p.end());
      init.treated.push_back(static_cast<std::uint8_t>(d));
    }
  }
  const PanelDataset data(init);
  for (const auto& p : did_att(data).periods) EXPECT_EQ(max_abs(p.effect, {0, 0, 0}), 0.0);
  for (const auto& p : ti_att(data, 2).periods) EXPECT_EQ(max_abs(p.effect, {0, 0, 0}), 0.0);
  for (const auto& p : did_bias(data, 1).periods) EXPECT_NEAR(max_abs(p.effect, {0, 0, 0}), 0.0, 1e-15);
  for (const auto& c : flow_decomposition(data, 0, 3).channels) {
    EXPECT_EQ(c.inflow, 0.0);
    EXPECT_EQ(c.outflow, 0.0);
  }
  EXPECT_NEAR(max_abs(placebo_att(data, 1), {0, 0, 0}), 0.0, 1e-15);
  for (const auto& c : pre_transition_differences(data).cells) {
    if (c.difference) EXPECT_EQ(*c.difference, 0.0);
  }
}

TEST(Effects, PlaceboDetectsPreTreatmentDivergence) {
  const auto data = random_panel(3, 3000, 2, 4, 3);
  const auto p = placebo_att(data, 1);
  EXPECT_GT(std::abs(p[0]), 0.02);
}

class RandomPanels : public ::testing::TestWithParam<int> {};

TEST_P(RandomPanels, Identities) {
  const int seed = GetParam();
  Rng rng(static_cast<std::uint64_t>(seed));
  const int K = 2 + static_cast<int>(rng() % 3);
  const int T = 3 + static_cast<int>(rng() % 4);
  const int T0 = 1 + static_cast<int>(rng() % (T - 1));
  const auto data = random_panel(static_cast<std::uint64_t>(seed) * 7919, 300, K, T, T0);
  const auto did = did_att(data);
  const auto ti = ti_att(data, 1, CellOptions{EmptyCellPolicy::kDrop});
  if (ti.periods.front().dropped_mass > 0) GTEST_SKIP() << "no common support";
  const auto bias = did_bias(data, 1);
  for (int t = T0 + 1; t <= T; ++t) {
    std::vector<double> gap(K);
    for (int k = 0; k < K; ++k) gap[k] = did.at(t).effect[k] - ti.at(t).effect[k];
    EXPECT_LT(max_abs(gap, bias.at(t).effect), 1e-10);
    EXPECT_NEAR(fixtures::sum(ti.at(t).effect), 0.0, 1e-10);
    EXPECT_NEAR(fixtures::sum(did.at(t).effect), 0.0, 1e-10);
    for (int k = 0; k < K; ++k) {
      const auto fd = flow_decomposition(data, k, t);
      EXPECT_NEAR(fd.net, ti.at(t).effect[k], 1e-10);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomPanels, ::testing::Range(1, 21));

TEST(Effects, Preconditions) {
  const auto mr = mr_example();
  EXPECT_THROW(ti_att(mr, 2), Error);
  EXPECT_THROW(history_contributions(mr, 1, 1), Error);
  EXPECT_THROW(flow_decomposition(mr, 2, 2), Error);
  auto no_control = subset_units(mr, {0, 1});
  try {
    did_att(no_control);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoControlUnits);
  }
}
