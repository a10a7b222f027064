#include "msd/simplify.hpp"
#include "random_trees.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msd;

TEST(Simplify, IdentityElimination) {
  EXPECT_EQ(to_infix(simplify(parse_infix("(S1 * 1) + 0"))), "S1");
  EXPECT_EQ(to_infix(simplify(parse_infix("S2 - 0"))), "S2");
  EXPECT_EQ(to_infix(simplify(parse_infix("S2 / 1"))), "S2");
  EXPECT_EQ(to_infix(simplify(parse_infix("S2 * 0 + S3"))), "S3");
  EXPECT_EQ(to_infix(simplify(parse_infix("0 / (S1 + 1)"))), "0");
}

TEST(Simplify, ConstantFolding) {
  EXPECT_EQ(to_infix(simplify(parse_infix("(2 * 3) * S2"))), "(6 * S2)");
  EXPECT_EQ(to_infix(simplify(parse_infix("2 * (3 * S2)"))), "(6 * S2)");
  EXPECT_EQ(to_infix(simplify(parse_infix("(1 + 2) ^ 2"))), "9");
}

TEST(Simplify, KeepsDivisionByZeroInvalid) {
  const ExprTree s = simplify(parse_infix("S1 / (1 - 1)"));
  EXPECT_FALSE(evaluate(s, StateVector::Ones(1)).valid);
}

TEST(Simplify, NeverGrowsAndPreservesValues) {
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const ExprTree e = msd::testing::random_test_tree(rng, 3);
    const ExprTree s = simplify(e);
    ASSERT_LE(s.size(), e.size()) << to_prefix(e);
    for (int k = 0; k < 5; ++k) {
      const StateVector x = msd::testing::random_state(rng, 3);
      const Evaluation a = evaluate(e, x);
      if (!a.valid) continue;
      const Evaluation b = evaluate(s, x);
      ASSERT_TRUE(b.valid) << to_prefix(e);
      ASSERT_NEAR(a.value, b.value, 1e-12 * std::max(1.0, std::abs(a.value))) << to_prefix(e) << " -> " << to_prefix(s);
    }
  }
}

TEST(Simplify, AgreesAtHundredPointsOnDeepTrees) {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const ExprTree e = random_tree(rng, msd::testing::tree_config(), 2, 6, true);
    const ExprTree s = simplify(e);
    for (int k = 0; k < 100; ++k) {
      const StateVector x = msd::testing::random_state(rng, 2);
      const Evaluation a = evaluate(e, x), b = evaluate(s, x);
      if (!a.valid) continue;
      ASSERT_TRUE(b.valid);
      ASSERT_NEAR(a.value, b.value, 1e-12 * std::max(1.0, std::abs(a.value)));
    }
  }
}

TEST(Simplify, Idempotent) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const ExprTree s = simplify(msd::testing::random_test_tree(rng, 3));
    ASSERT_EQ(simplify(s), s) << to_prefix(s);
  }
}
