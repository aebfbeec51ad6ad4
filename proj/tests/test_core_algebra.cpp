#include <gtest/gtest.h>

#include <cmath>

#include "spi/jet.hpp"
#include "spi/multi_index.hpp"

using namespace spi;

namespace {

JetKey power(std::size_t var, int e) { return JetSpace::with_exponent(0, var, e); }

}  // namespace

TEST(Jet, CosOfLinearJet) {
  auto sp = JetSpace::make({1}, 2);
  const Jet c = cos(Jet::variable(sp, 0));
  EXPECT_DOUBLE_EQ(c.constant(), 1.0);
  EXPECT_DOUBLE_EQ(c.coefficient(power(0, 1)), 0.0);
  EXPECT_DOUBLE_EQ(c.coefficient(power(0, 2)), -0.5);
}

TEST(Jet, ExpOfZeroIsOne) {
  auto sp = JetSpace::make({1, 1}, 4);
  const Jet e = exp(Jet(sp, 0.0));
  EXPECT_TRUE(e.is_constant());
  EXPECT_DOUBLE_EQ(e.constant(), 1.0);
}

TEST(Jet, LogSeriesMatchesFiniteDifferences) {
  auto sp = JetSpace::make({1}, 3);
  const Jet l = log(1.0 + Jet::variable(sp, 0));
  EXPECT_NEAR(l.constant(), 0.0, 1e-15);
  EXPECT_NEAR(l.coefficient(power(0, 1)), 1.0, 1e-14);
  EXPECT_NEAR(l.coefficient(power(0, 2)), -0.5, 1e-14);
  EXPECT_NEAR(l.coefficient(power(0, 3)), 1.0 / 3.0, 1e-14);
  // third derivative of ln(1+x) at 0 by central differences is 2
  const double eps = 1e-2;
  auto f = [](double x) { return std::log1p(x); };
  const double d3 = (f(2 * eps) - 2 * f(eps) + 2 * f(-eps) - f(-2 * eps)) / (2 * eps * eps * eps);
  EXPECT_NEAR(6.0 * l.coefficient(power(0, 3)), d3, 1e-3);
}

TEST(Jet, ProductTruncatesAtMaxWeight) {
  auto sp = JetSpace::make({2, 1}, 3);
  const Jet h = Jet::variable(sp, 0);
  const Jet w = Jet::variable(sp, 1);
  const Jet p = (1.0 + h + w) * (1.0 + h + w);
  EXPECT_DOUBLE_EQ(p.coefficient(JetSpace::unit(0)), 2.0);
  EXPECT_DOUBLE_EQ(p.coefficient(power(1, 2)), 1.0);
  EXPECT_DOUBLE_EQ(p.coefficient(JetSpace::unit(0) | JetSpace::unit(1)), 2.0);
  EXPECT_DOUBLE_EQ(p.coefficient(power(0, 2)), 0.0);
}

TEST(Jet, DivisionInvertsMultiplication) {
  auto sp = JetSpace::make({1, 1}, 5);
  const Jet a = 2.0 + Jet::variable(sp, 0) - 0.5 * Jet::variable(sp, 1);
  const Jet b = sin(Jet::variable(sp, 1, 0.3)) + 1.5;
  const Jet r = (a * b) / b - a;
  EXPECT_LT(r.norm(), 1e-14);
}

TEST(Jet, DerivativeOfMonomial) {
  auto sp = JetSpace::make({1, 1}, 4);
  const Jet x = Jet::variable(sp, 0), y = Jet::variable(sp, 1);
  const Jet d = (x * x * y).derivative(0);
  EXPECT_DOUBLE_EQ(d.coefficient(JetSpace::unit(0) | JetSpace::unit(1)), 2.0);
  EXPECT_EQ(d.size(), 1u);
}

TEST(Jet, FromTermsDropsHeavyTerms) {
  auto sp = JetSpace::make({2, 1}, 2);
  const Jet j = Jet::from_terms(sp, {{0, 1.0, 0}, {power(1, 3), 5.0, 0}, {JetSpace::unit(0), 2.0, 0}});
  EXPECT_EQ(j.size(), 2u);
  EXPECT_DOUBLE_EQ(j.coefficient(JetSpace::unit(0)), 2.0);
}

TEST(MultiIndex, WeightCountsTimeTwice) {
  EXPECT_EQ(MultiIndex({2, 0, 0}).weight(), 4);
  EXPECT_EQ(MultiIndex({0, 1, 1}).weight(), 2);
  EXPECT_EQ(MultiIndex({1, 1, 0}).order(), 2);
  EXPECT_EQ(MultiIndex({1, 1, 0}).noise_order(), 1);
  EXPECT_THROW(MultiIndex({-1, 0}), std::invalid_argument);
}

TEST(MultiIndex, EnumerationSmallCases) {
  const auto a = enumerate_multiindices(1, 1);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0], MultiIndex({0, 0}));
  EXPECT_EQ(a[1], MultiIndex({0, 1}));
  const auto b = enumerate_multiindices(1, 2);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[2], MultiIndex({1, 0}));
  EXPECT_EQ(b[3], MultiIndex({0, 2}));
  EXPECT_EQ(enumerate_multiindices(2, 2).size(), 7u);
}

TEST(MultiIndex, EnumerationMatchesBruteForce) {
  for (int w = 0; w <= 6; ++w) {
    std::size_t count = 0;
    for (int a0 = 0; a0 <= w; ++a0)
      for (int a1 = 0; a1 <= w; ++a1)
        for (int a2 = 0; a2 <= w; ++a2) count += 2 * a0 + a1 + a2 <= w;
    EXPECT_EQ(enumerate_multiindices(2, w).size(), count) << "w = " << w;
  }
}

TEST(MultiIndex, MomentConstants) {
  EXPECT_DOUBLE_EQ(moment_constant(MultiIndex({0, 1}), MultiIndex({0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(moment_constant(MultiIndex({0, 2}), MultiIndex({0, 2})), 3.0);
  EXPECT_DOUBLE_EQ(moment_constant(MultiIndex({1, 3, 1}), MultiIndex({0, 3, 1})), 15.0);
  EXPECT_THROW(moment_constant(MultiIndex({0, 1}), MultiIndex({0, 2})), std::invalid_argument);
  EXPECT_FALSE(even_noise_sum(MultiIndex({0, 1}), MultiIndex({0, 2})));
}
