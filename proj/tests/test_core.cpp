#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cdf/core.hpp"

using namespace cdf;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, int dim, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

TEST(Norm, InfNormIsLargestMagnitude) {
  EXPECT_EQ(norm(vec({0, 0.15, 0, -0.15}), NormOrder::Inf), 0.15);
}

TEST(Norm, ZeroVectorAndPythagoreanTriple) {
  EXPECT_EQ(norm(vec({0, 0, 0, 0}), NormOrder::Two), 0.0);
  EXPECT_EQ(norm(vec({3, 4}), NormOrder::Two), 5.0);
  EXPECT_EQ(norm(vec({3, -4}), NormOrder::One), 7.0);
}

TEST(Norm, TwoNormDoesNotUnderflowForTinyEntries) {
  EXPECT_GT(norm(vec({1e-170, 1e-170}), NormOrder::Two), 0.0);
}

TEST(Norm, RejectsNonFinite) {
  EXPECT_THROW(norm(vec({1.0, NAN}), NormOrder::Two), Error);
}

TEST(NormBall, Membership) {
  const NormBallSet X(10.0, NormOrder::Inf, 4);
  const NormBallSet U(5.0, NormOrder::Inf, 2);
  EXPECT_TRUE(X.contains(vec({0, 0.15, 0, -0.15})));
  EXPECT_FALSE(U.contains(vec({5.1, 0})));
  EXPECT_TRUE(U.contains(vec({5.0 + 0.5e-8, 0})));
  for (auto order : {NormOrder::One, NormOrder::Two, NormOrder::Inf}) {
    EXPECT_TRUE(NormBallSet(1e-3, order, 3).contains(Eigen::VectorXd::Zero(3)));
  }
}

TEST(NormBall, ViolationIsExcessOverRadius) {
  const NormBallSet U(5.0, NormOrder::Inf, 2);
  EXPECT_DOUBLE_EQ(U.violation(vec({6, 0})), 1.0);
  EXPECT_EQ(U.violation(vec({1, 1})), 0.0);
}

TEST(NormBall, Projection) {
  const NormBallSet box(5.0, NormOrder::Inf, 2);
  EXPECT_EQ(box.project(vec({7, -6})), vec({5, -5}));
  EXPECT_EQ(box.project(vec({1, 1})), vec({1, 1}));
  const NormBallSet ball(5.0, NormOrder::Two, 2);
  const Eigen::VectorXd p = ball.project(vec({6, 8}));
  EXPECT_NEAR(p(0), 3.0, 1e-12);
  EXPECT_NEAR(p(1), 4.0, 1e-12);
  EXPECT_THROW(NormBallSet(1.0, NormOrder::One, 2).project(vec({2, 0})), Error);
}

TEST(NormBall, RejectsBadConstructionAndDimensions) {
  EXPECT_THROW(NormBallSet(0.0, NormOrder::Two, 2), Error);
  EXPECT_THROW(NormBallSet(1.0, NormOrder::Two, 0), Error);
  EXPECT_THROW(NormBallSet(1.0, NormOrder::Two, 2).contains(vec({1, 2, 3})), Error);
}

TEST(NormBallProperty, ProjectionLandsInSetAndIsIdempotent) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = 1 + trial % 5;
    const NormOrder order = trial % 2 ? NormOrder::Two : NormOrder::Inf;
    const NormBallSet set(0.5 + trial % 7, order, dim, 0.0);
    const Eigen::VectorXd v = random_vector(rng, dim, 20.0);
    const Eigen::VectorXd p = set.project(v);
    ASSERT_TRUE(set.contains(p));
    ASSERT_EQ(set.project(p), p);
    if (set.contains(v)) {
      ASSERT_EQ(p, v);
    }
    // The projection is no farther from v than any sampled member.
    for (int j = 0; j < 5; ++j) {
      const Eigen::VectorXd w = set.project(random_vector(rng, dim, 20.0));
      ASSERT_LE((v - p).norm(), (v - w).norm() + 1e-12);
    }
  }
}

TEST(Comparison, LinearAndComposition) {
  const auto rho = ComparisonFunction::linear(0.99);
  EXPECT_DOUBLE_EQ(rho(0.45), 0.4455);
  EXPECT_TRUE(rho.is_below_identity());
  EXPECT_FALSE(ComparisonFunction::identity().is_below_identity());
  const auto a = ComparisonFunction::compose(rho, ComparisonFunction::power_law(0.1, 2.0));
  EXPECT_DOUBLE_EQ(a(3.0), 0.99 * 0.1 * 9.0);
  EXPECT_THROW(rho(-1.0), Error);
}

TEST(ComparisonProperty, PowerLawsAreZeroAtZeroAndStrictlyIncreasing) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(0.01, 5.0), p(0.5, 3.0), s(0.0, 10.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto f = ComparisonFunction::compose(ComparisonFunction::power_law(c(rng), p(rng)),
                                               ComparisonFunction::power_law(c(rng), p(rng)));
    EXPECT_EQ(f(0.0), 0.0);
    double a = s(rng), b = s(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    ASSERT_LT(f(a), f(b));
  }
}

TEST(KernelResolution, FloorAndExactZero) {
  EXPECT_TRUE(kernel_resolved(vec({0, 0}), 0.0));
  EXPECT_FALSE(kernel_resolved(vec({1e-200, 0}), 0.0));
  EXPECT_TRUE(kernel_resolved(vec({1, 0}), 1.0));
  EXPECT_FALSE(kernel_resolved(vec({1e-160, 0}), kKernelResolution / 2));
}
