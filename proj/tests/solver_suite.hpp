#pragma once

// Randomized solver checks shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "cdf/model.hpp"
#include "cdf/nlp.hpp"
#include "cdf/storage.hpp"

namespace cdf::suite {

inline std::vector<InputVec> random_inputs(std::mt19937_64& rng, int count, int m,
                                           double radius) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<InputVec> out;
  for (int i = 0; i < count; ++i) {
    InputVec v(m);
    for (int j = 0; j < m; ++j) v(j) = u(rng);
    out.push_back(v);
  }
  return out;
}

inline KernelFunction generator_kernel() {
  return KernelFunction::diagonal(Eigen::Vector4d(0.1, 10, 0.1, 10));
}

struct DominanceResult {
  int problems = 0;    // problems with a feasible warm start
  int violations = 0;  // solves worse than their warm start, or infeasible
  double worst_excess = -std::numeric_limits<double>::infinity();
};

/// Generator problems with horizons 1..5, a third of them with a terminal
/// kernel constraint. Warm starts are uniform inputs, or for the constrained
/// problems a perturbed cold solution, shrunk until feasible.
inline DominanceResult warm_start_dominance(std::uint64_t seed, int count) {
  const auto g = make_model("generator2");
  const auto l = generator_kernel();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.05, 0.05);
  DominanceResult out;
  for (int trial = 0; out.problems < count && trial < 4 * count; ++trial) {
    const int L = 1 + trial % 5;
    const StateVec x0 = Eigen::Vector4d(ux(rng), ux(rng), ux(rng), ux(rng));
    std::optional<TerminalConstraint> terminal;
    if (trial % 3 == 0) {
      terminal = TerminalConstraint{[l](const StateVec& x) { return l(x); },
                                    [l](const StateVec& x) { return l.gradient(x); }, l(x0),
                                    std::max(l(x0), 1e-12)};
    }
    const ShootingProblem p(g, x0, L, stage_sum(l, 0, L), terminal);
    std::vector<InputVec> base(static_cast<size_t>(L), InputVec::Zero(2));
    if (terminal) base = solve(p).inputs;
    std::vector<InputVec> warm;
    Feasibility f{false, 0.0};
    for (int attempt = 0; attempt < 50 && !f.feasible; ++attempt) {
      warm = random_inputs(rng, L, 2, 5.0 / (1 + attempt));
      for (int i = 0; i < L; ++i) warm[i] = base[i] + warm[i] * (terminal ? 0.1 : 1.0);
      f = check_feasible(p, warm);
    }
    if (!f.feasible) continue;
    ++out.problems;
    const double warm_value = evaluate_objective(p, warm);
    const auto r = solve(p, warm);
    const double excess = r.objective_value - warm_value;
    out.worst_excess = std::max(out.worst_excess, excess);
    if (r.status == SolveStatus::Infeasible || excess > 1e-8 ||
        !check_feasible(p, r.inputs).feasible) {
      ++out.violations;
    }
  }
  return out;
}

/// Largest |analytic - central difference| / max(|fd|, floor) over random
/// generator problems; the floor keeps entries near zero from dominating.
inline double gradient_relative_error(std::uint64_t seed, int trials) {
  const auto g = make_model("generator2");
  const auto l = generator_kernel();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.3, 0.3);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int L = 1 + trial % 6;
    const StateVec x0 = Eigen::Vector4d(ux(rng), ux(rng), ux(rng), ux(rng));
    const ShootingProblem p(g, x0, L, stage_sum(l, 0, L + 1));
    auto inputs = random_inputs(rng, L, 2, 5.0);
    const Eigen::VectorXd grad = evaluate_objective_gradient(p, inputs);
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double saved = inputs[i](j);
        const double h = 1e-5 * (1.0 + std::abs(saved));
        inputs[i](j) = saved + h;
        const double fp = evaluate_objective(p, inputs);
        inputs[i](j) = saved - h;
        const double fm = evaluate_objective(p, inputs);
        inputs[i](j) = saved;
        const double fd = (fp - fm) / (2 * h);
        const double floor = 1e-6 * grad.norm() + 1e-12;
        worst = std::max(worst, std::abs(grad(2 * i + j) - fd) / std::max(std::abs(fd), floor));
      }
    }
  }
  return worst;
}

/// Stacked linear rollout x(1..L) = S z + c.
struct StackedSensitivity {
  Matrix S;
  Eigen::VectorXd c;
};

inline StackedSensitivity stacked(const Matrix& A, const Matrix& B, const StateVec& x0, int L) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  StackedSensitivity s{Matrix::Zero(n * L, m * L), Eigen::VectorXd(n * L)};
  Matrix power = Matrix::Identity(n, n);
  for (int i = 0; i < L; ++i) {
    power = A * power;
    s.c.segment(n * i, n) = power * x0;
    Matrix apow = Matrix::Identity(n, n);
    for (int j = i; j >= 0; --j) {
      s.S.block(n * i, m * j, n, m) = apow * B;
      apow = A * apow;
    }
  }
  return s;
}

inline Matrix random_spd(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = u(rng);
  Matrix q = r * r.transpose() + 0.5 * Matrix::Identity(n, n);
  return 0.5 * (q + q.transpose());
}

struct LqResult {
  double worst_gradient_error = 0.0;   // relative to 1 + |closed-form gradient|
  double worst_objective_error = 0.0;  // relative to the closed-form optimum
  int solver_failures = 0;
};

/// Double integrator with sets far outside the reachable region, so the
/// optimum is the unconstrained least-squares solution.
inline LqResult lq_agreement(std::uint64_t seed, int trials) {
  const auto model = make_double_integrator(1e6, 1e6);
  const auto jac = model.jacobians(StateVec::Zero(2), InputVec::Zero(1));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-2, 2);
  LqResult out;
  for (int trial = 0; trial < trials; ++trial) {
    const int L = 1 + trial % 5;
    const Matrix Q = random_spd(rng, 2);
    const StateVec x0 = Eigen::Vector2d(ux(rng), ux(rng));
    const ShootingProblem p(model, x0, L, stage_sum(KernelFunction(Q), 1, L));
    const auto s = stacked(jac.dx, jac.du, x0, L);
    Matrix Qbar = Matrix::Zero(2 * L, 2 * L);
    for (int i = 0; i < L; ++i) Qbar.block(2 * i, 2 * i, 2, 2) = Q;

    const auto inputs = random_inputs(rng, L, 1, 2.0);
    Eigen::VectorXd z(L);
    for (int i = 0; i < L; ++i) z(i) = inputs[i](0);
    const Eigen::VectorXd want = 2.0 * s.S.transpose() * Qbar * (s.S * z + s.c);
    const Eigen::VectorXd got = evaluate_objective_gradient(p, inputs);
    out.worst_gradient_error =
        std::max(out.worst_gradient_error, (got - want).norm() / (1 + want.norm()));

    const Matrix H = s.S.transpose() * Qbar * s.S;
    const Eigen::VectorXd z_opt = -H.ldlt().solve(s.S.transpose() * Qbar * s.c);
    const Eigen::VectorXd x = s.S * z_opt + s.c;
    const double best = x.dot(Qbar * x);
    const auto r = solve(p);
    if (r.status == SolveStatus::Infeasible) {
      ++out.solver_failures;
      continue;
    }
    out.worst_objective_error =
        std::max(out.worst_objective_error, std::abs(r.objective_value - best) / std::abs(best));
  }
  return out;
}

}  // namespace cdf::suite
