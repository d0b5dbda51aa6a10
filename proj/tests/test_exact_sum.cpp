#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "esgrad/exact_sum.hpp"

using esgrad::ExactSum;

TEST(ExactSum, RecoversCancelledTerms) {
  ExactSum s;
  for (double x : {1e100, 1.0, -1e100}) s.add(x);
  EXPECT_EQ(s.value(), 1.0);
}

TEST(ExactSum, MatchesPythonFsumCases) {
  // Reference values from math.fsum.
  ExactSum a;
  for (int i = 0; i < 10; ++i) a.add(0.1);
  EXPECT_EQ(a.value(), 1.0);
  ExactSum b;
  for (double x : {1.0, 1e-16, 1e-16}) b.add(x);
  EXPECT_EQ(b.value(), 1.0000000000000002);
}

TEST(ExactSum, OrderIndependent) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> mag(-30, 30);
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) xs.push_back(std::ldexp(mag(gen), static_cast<int>(mag(gen))));
  ExactSum forward;
  for (double x : xs) forward.add(x);
  std::shuffle(xs.begin(), xs.end(), gen);
  ExactSum shuffled;
  for (double x : xs) shuffled.add(x);
  EXPECT_EQ(forward.value(), shuffled.value());
}

TEST(ExactSum, MergeEqualsConcatenation) {
  ExactSum left, right, all;
  for (int i = 0; i < 50; ++i) {
    const double x = 1.0 / (i + 1.0), y = -std::pow(3.0, -i);
    left.add(x);
    right.add(y);
    all.add(x);
    all.add(y);
  }
  left.merge(right);
  EXPECT_EQ(left.value(), all.value());
}

TEST(ExactSum, ProductIsExact) {
  const double a = 1.0 + 0x1p-30, b = 1.0 - 0x1p-30;  // a*b = 1 - 2^-60, not representable
  ExactSum s;
  s.add_product(a, b);
  s.add(-1.0);
  EXPECT_EQ(s.value(), -0x1p-60);
}

TEST(ExactSum, ScaledAccumulatorEqualsScaledTerms) {
  ExactSum inner;
  for (double x : {0.1, 0.2, 0.3}) inner.add(x);
  ExactSum viaScaled, viaTerms;
  viaScaled.add_scaled(inner, 3.0);
  for (double x : {0.1, 0.2, 0.3}) viaTerms.add_product(3.0, x);
  EXPECT_EQ(viaScaled.value(), viaTerms.value());
}

TEST(ExactSum, EmptyIsZero) { EXPECT_EQ(ExactSum{}.value(), 0.0); }
