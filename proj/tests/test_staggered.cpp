#include <gtest/gtest.h>

#include "support.hpp"

using namespace transition_att;
using fixtures::max_abs;

namespace {

// One unit per (cohort, outcome path) combination so every history has
// support in every cohort.
PanelDataset cohort_panel(const std::vector<int>& cohorts, int T, std::uint64_t seed, int n = 600) {
  Rng rng(seed);
  PanelInit init;
  init.alphabet = OutcomeAlphabet::generic(2);
  init.num_periods = T;
  int earliest = T;
  for (int g : cohorts) {
    if (g != 0) earliest = std::min(earliest, g);
  }
  init.num_pre_periods = earliest - 1;
  init.cohort.emplace();
  for (int i = 0; i < n; ++i) {
    const int g = cohorts[static_cast<std::size_t>(i) % cohorts.size()];
    for (int t = 1; t <= T; ++t) init.outcomes.push_back(static_cast<int>(rng() % 2));
    init.treated.push_back(g != 0 ? 1 : 0);
    init.cohort->push_back(g);
  }
  return PanelDataset(std::move(init));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kUsage;
}

}  // namespace

TEST(ControlSet, Examples) {
  const auto with_never = cohort_panel({0, 3, 5}, 6, 1);
  EXPECT_EQ(control_set(with_never, 3, 3, ControlMode::kBoth), (std::set<int>{0, 5}));
  EXPECT_EQ(control_set(with_never, 3, 3, ControlMode::kNever), (std::set<int>{0}));
  EXPECT_EQ(control_set(with_never, 3, 5, ControlMode::kBoth), (std::set<int>{0}));
  EXPECT_EQ(last_comparable_period(with_never), 6);

  const auto no_never = cohort_panel({3, 5}, 6, 2);
  EXPECT_EQ(control_set(no_never, 3, 4, ControlMode::kNotYet), (std::set<int>{5}));
  EXPECT_EQ(last_comparable_period(no_never), 4);
  EXPECT_EQ(code_of([&] { control_set(no_never, 5, 5, ControlMode::kNotYet); }), ErrorCode::kIndexOutOfRange);
  EXPECT_EQ(code_of([&] { control_set(with_never, 5, 5, ControlMode::kNotYet); }), ErrorCode::kEmptyControlSet);
  EXPECT_EQ(code_of([&] { control_set(no_never, 3, 3, ControlMode::kNever); }), ErrorCode::kEmptyControlSet);
  EXPECT_EQ(code_of([&] { control_set(with_never, 4, 4, ControlMode::kBoth); }), ErrorCode::kInvalidCohort);
}

TEST(CohortAtt, SingleCohortReducesToTi) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto data = fixtures::random_panel(40 + s, 500, 3, 5, 2);
    for (int lag = 1; lag <= 2; ++lag) {
      const auto ti = ti_att(data, lag, CellOptions{EmptyCellPolicy::kDrop});
      if (ti.periods.front().dropped_mass > 0) continue;
      for (auto mode : {ControlMode::kNever, ControlMode::kBoth}) {
        for (int t = 3; t <= 5; ++t) {
          const auto cell = cohort_att(data, 3, t, lag, mode);
          EXPECT_LT(max_abs(cell.effect, ti.at(t).effect), 1e-12);
          const auto agg = aggregate_staggered(data, t, lag, mode);
          EXPECT_LT(max_abs(agg.effect, cell.effect), 1e-15);
          ASSERT_EQ(agg.weights.size(), 1u);
          EXPECT_EQ(agg.weights[0], 1.0);
        }
      }
    }
  }
}

TEST(CohortAtt, ComparisonMixesCohortsByShare) {
  const auto data = cohort_panel({0, 0, 3, 5}, 6, 3, 1200);
  const auto cell = cohort_att(data, 3, 3, 1, ControlMode::kBoth);
  // direct computation: P(G=0 | G in {0,5}) = 2/3
  std::vector<double> w1(2, 0.0), cnt1(4, 0.0), w0(4, 0.0), cnt0(8, 0.0);
  for (int i = 0; i < data.num_units(); ++i) {
    const int g = data.first_treated_period(i);
    const int h = data.outcome(i, 2);
    const int y = data.outcome(i, 3);
    if (g == 3) {
      w1[h] += 1;
      cnt1[h * 2 + y] += 1;
    } else if (g == 0 || g == 5) {
      const int c = g == 0 ? 0 : 1;
      w0[c * 2 + h] += 1;
      cnt0[(c * 2 + h) * 2 + y] += 1;
    }
  }
  const double n1 = w1[0] + w1[1];
  double effect1 = 0.0;
  for (int h = 0; h < 2; ++h) {
    const double cf = (2.0 / 3.0) * cnt0[(0 * 2 + h) * 2 + 1] / w0[0 * 2 + h] +
                      (1.0 / 3.0) * cnt0[(1 * 2 + h) * 2 + 1] / w0[1 * 2 + h];
    effect1 += w1[h] / n1 * (cnt1[h * 2 + 1] / w1[h] - cf);
  }
  EXPECT_NEAR(cell.effect[1], effect1, 1e-12);
  EXPECT_EQ(cell.controls, (std::vector<int>{0, 5}));
  EXPECT_NEAR(fixtures::sum(cell.effect), 0.0, 1e-12);
}

TEST(Aggregate, CohortWeightsSumToOne) {
  const auto data = cohort_panel({0, 3, 3, 5}, 6, 4, 1000);
  const auto table = staggered_effects(data, 1, ControlMode::kBoth);
  for (const auto& a : table.aggregate) {
    EXPECT_NEAR(fixtures::sum(a.weights), 1.0, 1e-12);
    for (double w : a.weights) EXPECT_GT(w, 0.0);
  }
  const auto& t5 = table.aggregate.back();
  ASSERT_EQ(t5.cohorts.size(), 2u);
  EXPECT_NEAR(t5.weights[0], 2.0 / 3.0, 1e-12);
  // the table lists every identified (g, t)
  EXPECT_EQ(table.entries.size(), 4u + 2u);
}

TEST(Aggregate, NotYetModeStopsAtLastComparablePeriod) {
  const auto data = cohort_panel({3, 5}, 6, 5);
  const auto table = staggered_effects(data, 1, ControlMode::kNotYet);
  ASSERT_EQ(table.entries.size(), 2u);
  EXPECT_EQ(table.entries.back().period, 4);
  EXPECT_EQ(code_of([&] { staggered_effects(data, 1, ControlMode::kNever); }), ErrorCode::kEmptyControlSet);
}

TEST(Aggregate, NotYetModeIgnoresNeverTreated) {
  const auto data = cohort_panel({0, 3, 5}, 6, 8);
  const auto table = staggered_effects(data, 1, ControlMode::kNotYet);
  ASSERT_EQ(table.entries.size(), 2u);
  for (const auto& c : table.entries) {
    EXPECT_EQ(c.cohort, 3);
    EXPECT_EQ(c.controls, (std::vector<int>{5}));
  }
  EXPECT_EQ(staggered_effects(data, 1, ControlMode::kBoth).entries.size(), 4u + 2u);
}

TEST(CohortAtt, LagLimitedByCohortStart) {
  const auto data = cohort_panel({0, 3, 5}, 6, 6);
  EXPECT_EQ(code_of([&] { cohort_att(data, 3, 3, 3, ControlMode::kNever); }), ErrorCode::kLagExceedsHistory);
  EXPECT_NO_THROW(cohort_att(data, 5, 5, 4, ControlMode::kNever, CellOptions{EmptyCellPolicy::kDrop}));
}

TEST(Staggered, SimultaneousEstimatorsRefuse) {
  const auto data = cohort_panel({0, 3, 5}, 6, 7);
  EXPECT_EQ(code_of([&] { ti_att(data, 1); }), ErrorCode::kStaggeredTiming);
  EXPECT_EQ(code_of([&] { did_att(data); }), ErrorCode::kStaggeredTiming);
}

TEST(Staggered, ModeNames) {
  for (auto m : {ControlMode::kNever, ControlMode::kNotYet, ControlMode::kBoth}) {
    EXPECT_EQ(parse_mode(mode_name(m)), m);
  }
  EXPECT_THROW(parse_mode("sometimes"), Error);
}
