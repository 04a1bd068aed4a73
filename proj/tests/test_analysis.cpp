#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cdf/analysis.hpp"
#include "fuzz_logs.hpp"

using namespace cdf;

namespace {

const ComparisonFunction kRho = ComparisonFunction::linear(0.99);

KernelFunction identity2() { return KernelFunction(Matrix::Identity(2, 2)); }

// Zero-state log of the given length with every step solved.
TrajectoryLog equilibrium_log(long steps) {
  TrajectoryLog log;
  log.meta.model = "generator2";
  log.meta.n = 2;
  log.meta.m = 1;
  log.meta.steps = steps;
  log.meta.Q = Matrix::Identity(2, 2);
  for (long k = 0; k <= steps; ++k) {
    TrajectoryRow row;
    row.k = k;
    row.x = StateVec::Zero(2);
    if (k < steps) {
      row.u = InputVec::Zero(1);
      row.V = 0.0;
      row.s = 0.0;
      row.status = SolveStatus::Optimal;
    }
    log.rows.push_back(row);
  }
  return log;
}

// Scalar-like decaying log: x(k) = [a^k, 0], V = 2 l, s = V(k+1) - V(k).
TrajectoryLog decaying_log(long steps, double a) {
  TrajectoryLog log = equilibrium_log(steps);
  for (long k = 0; k <= steps; ++k) {
    auto& row = log.rows[k];
    row.x(0) = std::pow(a, static_cast<double>(k));
    row.l = row.x.squaredNorm();
  }
  for (long k = 0; k < steps; ++k) {
    log.rows[k].V = 2.0 * log.rows[k].l;
    log.rows[k].s = 2.0 * log.rows[k + 1].l - 2.0 * log.rows[k].l;
  }
  return log;
}

}  // namespace

TEST(Dissipation, Examples) {
  const std::vector<double> zeros_v{0, 0, 0}, zeros_s{0, 0};
  const auto eq = check_dissipation(zeros_v, zeros_s);
  EXPECT_TRUE(eq.ok);
  EXPECT_EQ(eq.worst_slack, 0.0);

  const std::vector<double> v1{1.0, 0.5}, s1{-0.5};
  const auto tight = check_dissipation(v1, s1);
  EXPECT_TRUE(tight.ok);
  EXPECT_EQ(tight.worst_slack, 0.0);

  const std::vector<double> v2{1.0, 0.8};
  const auto bad = check_dissipation(v2, s1);
  EXPECT_FALSE(bad.ok);
  EXPECT_NEAR(bad.worst_slack, 0.3, 1e-15);
  EXPECT_EQ(bad.worst_k, 0);
}

TEST(Dissipation, LengthErrors) {
  const std::vector<double> one{1.0}, two{1.0, 2.0}, s2{0.0, 0.0};
  EXPECT_THROW(check_dissipation(one, {}), Error);
  EXPECT_THROW(check_dissipation(two, s2), Error);
}

TEST(MStepDecrease, Examples) {
  const auto l = identity2();
  const std::vector<double> zeros(6, 0.0);
  EXPECT_TRUE(check_m_step_decrease(zeros, zeros, l, 2, kRho).ok);

  std::vector<double> V, xn;
  for (int k = 0; k < 8; ++k) {
    xn.push_back(std::pow(0.5, k));
    V.push_back(100.0 * std::pow(0.1, k));
  }
  EXPECT_TRUE(check_m_step_decrease(V, xn, l, 2, kRho).ok);

  const std::vector<double> flat(6, 1.0), ones(6, 1.0);
  const auto r = check_m_step_decrease(flat, ones, l, 1, kRho);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.first_failure, 0);
  EXPECT_THROW(check_m_step_decrease(flat, ones, l, 6, kRho), Error);
}

TEST(FiniteStepClf, AgreesWithMStepDecreaseAndCatchesConstructedWindow) {
  const auto l = identity2();
  const auto nu = decrease_rate(l, kRho);
  std::vector<double> V, xn;
  for (int k = 0; k < 10; ++k) {
    xn.push_back(std::pow(0.6, k));
    V.push_back(5.0 * std::pow(0.3, k));
  }
  ASSERT_TRUE(check_m_step_decrease(V, xn, l, 3, kRho).ok);
  EXPECT_TRUE(check_finite_step_clf(V, xn, 3, nu).ok);
  const std::vector<double> zeros(5, 0.0);
  EXPECT_TRUE(check_finite_step_clf(zeros, zeros, 2, nu).ok);

  // Window starting at 4 decreases by slightly less than required.
  V[4 + 3] = V[4] - nu(xn[4]) + 2e-8;
  const auto r = check_finite_step_clf(V, xn, 3, nu);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.first_failure, 4);
}

TEST(CyclicWindows, EquilibriumMarginsAreZero) {
  const std::vector<double> s(5, 0.0), l(5, 0.0);
  const auto r = check_cyclic_windows(s, l, 2, kRho);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.margins.size(), 4u);
  for (const auto& [k, m] : r.margins) EXPECT_EQ(m, 0.0);
}

TEST(CyclicWindows, UnresolvedWindowsAreSkipped) {
  const std::vector<double> s{0.1, -1.0}, l{0.0, 1.0};
  const std::vector<char> resolved{0, 1};
  const auto r = check_cyclic_windows(s, l, 1, kRho, 0, 1, resolved);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.unresolved, 1);
  EXPECT_FALSE(check_cyclic_windows(s, l, 1, kRho).ok);
}

TEST(CyclicWindows, SmallestCertifiedM) {
  // Supplies alternate +0.3 / -1.0 with l = 1: M = 1 fails, M = 2 windows sum
  // to -0.7 which still misses -0.99, M = 3 reaches -1.7 or -0.4.
  const std::vector<double> s{0.3, -1.0, 0.3, -1.0, 0.3, -1.0}, l(6, 1.0);
  EXPECT_FALSE(smallest_certified_m(s, l, kRho, 0, 5, 2, WindowStart::AfterStartup).has_value());
  const std::vector<double> s2{-2.0, 0.5, -2.0, 0.5, -2.0, 0.5};
  EXPECT_EQ(smallest_certified_m(s2, l, kRho, 0, 5, 4, WindowStart::FromOrigin), 2);
}

TEST(CrossCheck, EquilibriumIsConsistent) {
  const std::vector<double> V(6, 0.0), s(5, 0.0), l(6, 0.0), xn(6, 0.0);
  for (int M = 1; M <= 4; ++M) {
    EXPECT_TRUE(cyclic_clf_cross_check(V, s, l, xn, identity2(), M, kRho).consistent);
  }
}

TEST(CrossCheckProperty, FuzzedLogsNeverDisagree) {
  std::mt19937_64 rng(2024);
  long windows = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = fuzz::synthetic_log(rng, kRho);
    const auto v = cyclic_clf_cross_check(g.V, g.s, g.l, g.x_norm2, g.kernel, g.M, kRho);
    ASSERT_TRUE(v.consistent) << "trial " << trial << " shape " << g.shape << ": " << v.detail;
    windows += v.windows;
  }
  EXPECT_GT(windows, 1000);
}

TEST(CrossCheckProperty, SummedDissipationNeverCertifiesBeyondTheCyclicCheck) {
  // Where every step of a window dissipates and the window's supply is
  // cyclically negative, the M-step decrease holds within M tolerances.
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = fuzz::synthetic_log(rng, kRho);
    const auto nu = decrease_rate(g.kernel, kRho);
    for (long k = 0; k + g.M < static_cast<long>(g.V.size()); ++k) {
      bool dissipative = true;
      for (long i = k; i < k + g.M; ++i) dissipative &= g.V[i + 1] - g.V[i] <= g.s[i] + kTolStat;
      if (!dissipative || !cyclic_holds(g.s, g.l, k + g.M - 1, g.M, kRho)) continue;
      const double scale = std::abs(g.V[k]) + std::abs(g.V[k + g.M]) + g.l[k];
      ASSERT_LE(g.V[k + g.M] - g.V[k],
                -nu(g.x_norm2[k]) + g.M * kTolStat + 1e-13 * scale)
          << "trial " << trial << " k " << k;
    }
  }
}

TEST(Convergence, Metrics) {
  const std::vector<double> zeros(5, 0.0);
  const auto eq = convergence_metrics(zeros, zeros, 1e-3);
  EXPECT_EQ(eq.settle_time, 0);
  EXPECT_EQ(eq.final_norm, 0.0);
  const std::vector<double> far(5, 1.0);
  EXPECT_FALSE(convergence_metrics(far, far, 1e-3).settle_time.has_value());
  const std::vector<double> dip{1.0, 1e-4, 1.0, 1e-4, 1e-5};
  EXPECT_EQ(convergence_metrics(dip, {}, 1e-3).settle_time, 3);
  EXPECT_THROW(convergence_metrics({}, {}, 1e-3), Error);
}

TEST(Certify, EquilibriumLogIsCertified) {
  const auto r = certify(equilibrium_log(20));
  EXPECT_EQ(r.verdict, Verdict::Certified);
  EXPECT_TRUE(r.dissipation_ok);
  EXPECT_EQ(r.dissipation.worst_slack, 0.0);
  for (const auto& [k, m] : r.cyclic.margins) EXPECT_EQ(m, 0.0);
}

TEST(Certify, DecayingLogIsCertifiedAtTheSmallestM) {
  const auto r = certify(decaying_log(30, 0.5));
  EXPECT_EQ(r.verdict, Verdict::Certified) << to_text(r);
  EXPECT_EQ(r.smallest_M, 1);
}

TEST(Certify, IncompleteLogIsUncertified) {
  auto log = decaying_log(30, 0.5);
  log.rows.pop_back();
  const auto r = certify(log);
  EXPECT_EQ(r.verdict, Verdict::Uncertified);
  EXPECT_FALSE(r.complete);
}

TEST(Certify, RaisedStorageValueFailsDissipationAtThatStep) {
  auto log = decaying_log(30, 0.5);
  *log.rows[12].V += 0.01;
  const auto r = certify(log);
  EXPECT_FALSE(r.dissipation_ok);
  // Raising V(12) breaks the inequality from 11 to 12.
  EXPECT_EQ(r.dissipation.worst_k, 11);
  EXPECT_EQ(r.verdict, Verdict::Uncertified);
}

TEST(Certify, InconsistentKernelColumnFailsStorageBounds) {
  auto log = decaying_log(10, 0.5);
  log.rows[3].l *= 2.0;
  EXPECT_FALSE(certify(log).storage_bounds_ok);
}

TEST(Certify, RenderingIsDeterministic) {
  const auto log = decaying_log(25, 0.7);
  EXPECT_EQ(to_text(certify(log)), to_text(certify(log)));
}
