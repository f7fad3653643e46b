#include <gtest/gtest.h>

#include "support.hpp"

using namespace transition_att;
using fixtures::panel_from_csv;

namespace {

ErrorCode code_of(const std::string& csv) {
  try {
    panel_from_csv(csv);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kUsage;
}

}  // namespace

TEST(OneHot, Basics) {
  EXPECT_EQ(one_hot(0, 2), (std::vector<double>{1, 0}));
  EXPECT_EQ(one_hot(2, 3), (std::vector<double>{0, 0, 1}));
  EXPECT_THROW(one_hot(3, 3), Error);
  EXPECT_THROW(one_hot(-1, 3), Error);
}

TEST(HistoryKey, EncodeDecode) {
  for (int code = 0; code < 27; ++code) {
    EXPECT_EQ(HistoryKey::decode(code, 3, 3).code(3), code);
  }
  EXPECT_EQ(HistoryKey::decode(5, 2, 3).states, (std::vector<int>{1, 2}));
}

TEST(HistoryKey, WindowSlices) {
  const auto mr = mr_example();
  // unit 12 starts unemployed
  EXPECT_EQ(history_key(mr, 12, 1, 1).states, std::vector<int>{0});

  PanelInit init;
  init.alphabet = OutcomeAlphabet({"a", "b", "c", "d"});
  init.num_periods = 5;
  init.num_pre_periods = 4;
  init.outcomes = {0, 1, 2, 3, 0, 3, 3, 3, 3, 3};
  init.treated = {1, 0};
  const PanelDataset data(init);
  EXPECT_EQ(history_key(data, 0, 4, 2).states, (std::vector<int>{2, 3}));
  try {
    history_key(data, 0, 4, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLagExceedsHistory);
  }
}

TEST(Csv, MrRoundTrip) {
  const auto mr = mr_example();
  std::ostringstream out;
  write_panel_csv(mr, out);
  const auto back = panel_from_csv(out.str(), {}, mr.alphabet());
  EXPECT_EQ(back.num_units(), 48);
  EXPECT_EQ(back.num_periods(), 2);
  EXPECT_EQ(back.num_pre_periods(), 1);
  EXPECT_EQ(back.num_categories(), 2);
  EXPECT_EQ(back.outcomes(), mr.outcomes());
  EXPECT_EQ(back.num_treated(), 24);
  std::ostringstream again;
  write_panel_csv(back, again);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Csv, Errors) {
  EXPECT_EQ(code_of("unit,time,outcome\n1,1,a\n"), ErrorCode::kMissingColumn);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n"
                    "1,1,a,0\n1,2,a,0\n1,3,b,1\n1,4,b,1\n"
                    "2,1,a,0\n2,2,b,0\n2,4,a,0\n"),
            ErrorCode::kUnbalancedPanel);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n"
                    "1,1,a,0\n1,2,a,1\n1,3,b,0\n"
                    "2,1,a,0\n2,2,b,0\n2,3,b,0\n"),
            ErrorCode::kNonAbsorbingTreatment);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n1,1,a,0\n1,1,b,0\n1,2,a,1\n"), ErrorCode::kDuplicateObservation);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n1,1,a,0\n1,2,a,maybe\n"), ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n1,1,a,0\n1,2,a,0\n2,1,a,0\n2,2,b,0\n"), ErrorCode::kNoTreatedUnits);
  EXPECT_EQ(code_of("unit,time,outcome,treated\n1,1,a,1\n1,2,a,1\n2,1,a,0\n2,2,b,0\n"), ErrorCode::kInvalidCohort);
}

TEST(Csv, UnknownLabelUnderExplicitAlphabet) {
  try {
    panel_from_csv("unit,time,outcome,treated\n1,1,a,0\n1,2,z,1\n2,1,a,0\n2,2,b,0\n", {},
                   OutcomeAlphabet({"a", "b"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownLabel);
  }
}

TEST(Csv, SchemaAndTimeOrdering) {
  const auto data = panel_from_csv(
      "id,year,state,d\n"
      "x,10,b,1\nx,9,a,0\nx,8,a,0\n"
      "y,8,b,0\ny,9,b,0\ny,10,a,0\n",
      CsvSchema::parse("unit=id,time=year,outcome=state,treated=d"));
  EXPECT_EQ(data.time_labels(), (std::vector<std::string>{"8", "9", "10"}));
  EXPECT_EQ(data.num_pre_periods(), 2);
  EXPECT_EQ(data.outcome(0, 3), 1);
  EXPECT_EQ(data.unit_ids(), (std::vector<std::string>{"x", "y"}));
  EXPECT_THROW(CsvSchema::parse("unit=id,colour=c"), Error);
}

TEST(Csv, StaggeredStartsBecomeCohorts) {
  const auto data = panel_from_csv(
      "unit,time,outcome,treated\n"
      "1,1,a,0\n1,2,a,1\n1,3,b,1\n"
      "2,1,a,0\n2,2,b,0\n2,3,b,1\n"
      "3,1,b,0\n3,2,b,0\n3,3,a,0\n");
  EXPECT_TRUE(data.is_staggered());
  EXPECT_EQ(data.first_treated_period(0), 2);
  EXPECT_EQ(data.first_treated_period(1), 3);
  EXPECT_EQ(data.first_treated_period(2), 0);
  EXPECT_EQ(data.num_pre_periods(), 1);
}

TEST(Panel, AlphabetReorderAndSubset) {
  const auto mr = mr_example();
  const auto flipped = with_alphabet(mr, OutcomeAlphabet({"employed", "unemployed"}));
  for (int i = 0; i < mr.num_units(); ++i) EXPECT_EQ(flipped.outcome(i, 2), 1 - mr.outcome(i, 2));
  const auto sub = subset_units(mr, {0, 47});
  EXPECT_EQ(sub.num_units(), 2);
  EXPECT_TRUE(sub.treated(0));
  EXPECT_FALSE(sub.treated(1));
}

TEST(Csv, InferredAlphabetIsSorted) {
  const auto mr = mr_example();
  std::ostringstream out;
  write_panel_csv(mr, out);
  const auto back = panel_from_csv(out.str());
  EXPECT_EQ(back.alphabet().labels(), (std::vector<std::string>{"employed", "unemployed"}));
  for (int i = 0; i < mr.num_units(); ++i) {
    for (int t = 1; t <= 2; ++t) {
      EXPECT_EQ(back.alphabet().label(back.outcome(i, t)), mr.alphabet().label(mr.outcome(i, t)));
    }
  }
}
