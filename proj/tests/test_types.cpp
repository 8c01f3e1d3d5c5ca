#include "lschain/types.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

namespace lschain {
namespace {

TEST(Interval, GeometryAccessors) {
  const Interval iv{3, 2};  // sites 3,4,5
  EXPECT_EQ(iv.right(), 5);
  EXPECT_EQ(iv.sites(), 3);
  EXPECT_TRUE(iv.contains_site(3));
  EXPECT_TRUE(iv.contains_site(5));
  EXPECT_FALSE(iv.contains_site(2));
  EXPECT_FALSE(iv.contains_site(6));
}

TEST(Interval, ContainmentAndDisjointness) {
  const Interval big{2, 4};  // sites 2..6
  const Interval sub{3, 2};  // sites 3..5
  const Interval shifted{5, 3};
  EXPECT_TRUE(big.contains(sub));
  EXPECT_TRUE(big.contains(big));
  EXPECT_FALSE(sub.contains(big));
  EXPECT_FALSE(big.disjoint_from(shifted));   // share sites 5,6
  EXPECT_TRUE(sub.disjoint_from(Interval{6, 1}));
  EXPECT_FALSE(sub.disjoint_from(Interval{5, 1}));
}

TEST(Interval, ToString) { EXPECT_EQ(to_string(Interval{2, 3}), "I(3,2)"); }

TEST(StepIndexTest, IntervalOfStep) {
  const StepIndex s{2, 3};
  EXPECT_EQ(s.interval(), (Interval{3, 2}));
}

TEST(StepSequence, OrderAndCompleteness) {
  const int n = 5;
  const auto seq = step_sequence(n);
  // k runs 1..n-1; for each k, q runs 1..n-k.
  ASSERT_EQ(static_cast<int>(seq.size()), n * (n - 1) / 2);
  EXPECT_EQ(seq.front().k, 1);
  EXPECT_EQ(seq.front().q, 1);
  EXPECT_EQ(seq.back().k, n - 1);
  EXPECT_EQ(seq.back().q, 1);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    EXPECT_TRUE(step_precedes(seq[i - 1], seq[i]));
    EXPECT_FALSE(step_precedes(seq[i], seq[i - 1]));
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& s : seq) {
    EXPECT_GE(s.k, 1);
    EXPECT_LE(s.k, n - 1);
    EXPECT_GE(s.q, 1);
    EXPECT_LE(s.q, n - s.k);
    seen.insert({s.k, s.q});
  }
  EXPECT_EQ(seen.size(), seq.size());
}

TEST(StepSequence, RejectsTinyChains) {
  EXPECT_THROW(step_sequence(1), ConfigError);
  EXPECT_THROW(step_sequence(0), ConfigError);
  EXPECT_EQ(step_sequence(2).size(), 1u);
}

TEST(StepSequence, PredecessorWalksBackwards) {
  const int n = 4;
  const auto seq = step_sequence(n);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const StepIndex pred = predecessor_step(seq[i], n);
    EXPECT_EQ(pred.k, seq[i - 1].k);
    EXPECT_EQ(pred.q, seq[i - 1].q);
  }
  const StepIndex before_first = predecessor_step(seq.front(), n);
  EXPECT_EQ(before_first.k, 0);
  EXPECT_EQ(before_first.q, n);
}

TEST(StepOrderTest, MatchesProcessingOrder) {
  const auto seq = step_sequence(5);
  StepOrder less;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t j = 0; j < seq.size(); ++j) {
      const Interval a = seq[i].interval();
      const Interval b = seq[j].interval();
      if (i < j) {
        EXPECT_TRUE(less(a, b));
      } else if (i > j) {
        EXPECT_FALSE(less(a, b));
      } else {
        EXPECT_FALSE(less(a, b));
        EXPECT_FALSE(less(b, a));
      }
    }
  }
}

TEST(Errors, HierarchyAndPayload) {
  try {
    throw SingularRestrictionError("blocked", 1e-14);
  } catch (const Error& e) {
    const auto* sre = dynamic_cast<const SingularRestrictionError*>(&e);
    ASSERT_NE(sre, nullptr);
    EXPECT_DOUBLE_EQ(sre->rcond, 1e-14);
  }
  EXPECT_THROW(throw SupportError("s"), ConfigError);
  EXPECT_THROW(throw DegenerateGroundStateError("d"), Error);
  EXPECT_THROW(throw BracketingError("b"), Error);
}

}  // namespace
}  // namespace lschain
