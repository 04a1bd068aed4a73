#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdf/core.hpp"

namespace cdf {

struct Jacobians {
  Matrix dx;  // df/dx, n x n
  Matrix du;  // df/du, n x m
};

/// Discrete-time system x+ = f(x, u) together with its constraint sets.
class SystemModel {
 public:
  using Transition = std::function<StateVec(const StateVec&, const InputVec&)>;
  using JacobianFn = std::function<Jacobians(const StateVec&, const InputVec&)>;

  SystemModel(std::string name, int n, int m, NormBallSet state_set,
              NormBallSet input_set, Transition transition,
              JacobianFn jacobians = {})
      : name_(std::move(name)),
        n_(n),
        m_(m),
        state_set_(std::move(state_set)),
        input_set_(std::move(input_set)),
        transition_(std::move(transition)),
        jacobians_(std::move(jacobians)) {
    if (n_ <= 0 || m_ <= 0) {
      throw Error(ErrorCode::InvalidInput, "model dimensions must be positive");
    }
    if (state_set_.dimension() != n_ || input_set_.dimension() != m_) {
      throw Error(ErrorCode::DimensionMismatch, "constraint set dimensions of model " + name_);
    }
    if (!transition_) {
      throw Error(ErrorCode::InvalidInput, "model " + name_ + " has no transition map");
    }
    const StateVec origin = transition_(StateVec::Zero(n_), InputVec::Zero(m_));
    if (origin.size() != n_ || !(origin.array() == 0.0).all()) {
      throw Error(ErrorCode::InvalidInput, "model " + name_ + " violates f(0, 0) = 0");
    }
  }

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int m() const { return m_; }
  const NormBallSet& state_set() const { return state_set_; }
  const NormBallSet& input_set() const { return input_set_; }
  bool has_analytic_jacobians() const { return static_cast<bool>(jacobians_); }

  StateVec step(const StateVec& x, const InputVec& u) const {
    check_args(x, u);
    StateVec next = transition_(x, u);
    if (next.size() != n_) {
      throw Error(ErrorCode::DimensionMismatch, "transition of " + name_ + " returned wrong size");
    }
    if (!next.allFinite()) {
      throw Error(ErrorCode::NumericOverflow, "non-finite successor state in " + name_);
    }
    return next;
  }

  /// Predicted states x(1), ..., x(L) for inputs u(0), ..., u(L-1).
  std::vector<StateVec> rollout(const StateVec& x0, const std::vector<InputVec>& inputs) const {
    if (inputs.empty()) {
      throw Error(ErrorCode::Precondition, "rollout needs at least one input");
    }
    std::vector<StateVec> states;
    states.reserve(inputs.size());
    const StateVec* current = &x0;
    for (const auto& u : inputs) {
      states.push_back(step(*current, u));
      current = &states.back();
    }
    return states;
  }

  /// Central finite-difference Jacobians with step h.
  Jacobians jacobian_fd(const StateVec& x, const InputVec& u, double h = 1e-6) const {
    if (!(h > 0.0)) throw Error(ErrorCode::Precondition, "finite-difference step must be > 0");
    check_args(x, u);
    Jacobians jac{Matrix(n_, n_), Matrix(n_, m_)};
    StateVec xp = x;
    for (int j = 0; j < n_; ++j) {
      const double saved = xp(j);
      xp(j) = saved + h;
      const StateVec fp = step(xp, u);
      xp(j) = saved - h;
      const StateVec fm = step(xp, u);
      xp(j) = saved;
      jac.dx.col(j) = (fp - fm) / (2.0 * h);
    }
    InputVec up = u;
    for (int j = 0; j < m_; ++j) {
      const double saved = up(j);
      up(j) = saved + h;
      const StateVec fp = step(x, up);
      up(j) = saved - h;
      const StateVec fm = step(x, up);
      up(j) = saved;
      jac.du.col(j) = (fp - fm) / (2.0 * h);
    }
    if (!jac.dx.allFinite() || !jac.du.allFinite()) {
      throw Error(ErrorCode::NumericOverflow, "non-finite finite-difference Jacobian");
    }
    return jac;
  }

  /// Analytic Jacobians when the model provides them, otherwise central
  /// differences.
  Jacobians jacobians(const StateVec& x, const InputVec& u) const {
    if (!jacobians_) return jacobian_fd(x, u);
    check_args(x, u);
    return jacobians_(x, u);
  }

 private:
  void check_args(const StateVec& x, const InputVec& u) const {
    if (x.size() != n_ || u.size() != m_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "model " + name_ + " expects (" + std::to_string(n_) + ", " +
                      std::to_string(m_) + ") got (" + std::to_string(x.size()) + ", " +
                      std::to_string(u.size()) + ")");
    }
    require_finite(x, "state");
    require_finite(u, "input");
  }

  std::string name_;
  int n_;
  int m_;
  NormBallSet state_set_;
  NormBallSet input_set_;
  Transition transition_;
  JacobianFn jacobians_;
};

/// Two interconnected synchronous generators with sinusoidal coupling,
/// forward-Euler discretized at 0.1 s:
///   x+ = A x + B1 u + B2 sin(x1 - x3).
/// States: angle and frequency deviation of generator 1, then generator 2.
namespace generator2 {

inline Matrix A() {
  Matrix a = Matrix::Zero(4, 4);
  a(0, 0) = 1.0;
  a(0, 1) = 31.4159;
  a(1, 1) = 0.999;
  a(2, 2) = 1.0;
  a(2, 3) = 31.4159;
  a(3, 3) = 0.999;
  return a;
}

inline Matrix B1() {
  Matrix b = Matrix::Zero(4, 2);
  b(1, 0) = 0.01;
  b(3, 1) = 0.01;
  return b;
}

inline Eigen::Vector4d B2() { return {0.0, -0.005, 0.0, 0.005}; }

inline StateVec initial_state() { return Eigen::Vector4d(0.0, 0.15, 0.0, -0.15); }

inline SystemModel make(NormOrder set_norm = NormOrder::Inf, double state_radius = 10.0,
                        double input_radius = 5.0) {
  const Matrix a = A();
  const Matrix b1 = B1();
  const StateVec b2 = B2();
  auto f = [a, b1, b2](const StateVec& x, const InputVec& u) -> StateVec {
    return a * x + b1 * u + b2 * std::sin(x(0) - x(2));
  };
  auto jac = [a, b1, b2](const StateVec& x, const InputVec&) {
    const double c = std::cos(x(0) - x(2));
    Jacobians j{a, b1};
    j.dx.col(0) += b2 * c;
    j.dx.col(2) -= b2 * c;
    return j;
  };
  return SystemModel("generator2", 4, 2, NormBallSet(state_radius, set_norm, 4),
                     NormBallSet(input_radius, set_norm, 2), f, jac);
}

}  // namespace generator2

/// x+ = a x + u on the real line.
inline SystemModel make_scalar_linear(double a = 0.5, double state_radius = 10.0,
                                      double input_radius = 5.0) {
  auto f = [a](const StateVec& x, const InputVec& u) -> StateVec {
    StateVec next(1);
    next(0) = a * x(0) + u(0);
    return next;
  };
  auto jac = [a](const StateVec&, const InputVec&) {
    return Jacobians{Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, 1.0)};
  };
  return SystemModel("scalar_linear", 1, 1, NormBallSet(state_radius, NormOrder::Inf, 1),
                     NormBallSet(input_radius, NormOrder::Inf, 1), f, jac);
}

/// Sampled double integrator x+ = [1 1; 0 1] x + [0.5; 1] u.
inline SystemModel make_double_integrator(double state_radius = 10.0, double input_radius = 1.0) {
  Matrix a(2, 2);
  a << 1.0, 1.0, 0.0, 1.0;
  Matrix b(2, 1);
  b << 0.5, 1.0;
  auto f = [a, b](const StateVec& x, const InputVec& u) -> StateVec { return a * x + b * u; };
  auto jac = [a, b](const StateVec&, const InputVec&) { return Jacobians{a, b}; };
  return SystemModel("double_integrator", 2, 1, NormBallSet(state_radius, NormOrder::Inf, 2),
                     NormBallSet(input_radius, NormOrder::Inf, 1), f, jac);
}

inline std::vector<std::string> model_names() {
  return {"generator2", "scalar_linear", "double_integrator"};
}

/// Registered model by name, with optional overrides of the set radii and
/// norm order.
struct ModelOverrides {
  std::optional<double> state_radius;
  std::optional<double> input_radius;
  std::optional<NormOrder> set_norm;
};

inline SystemModel make_model(const std::string& name, const ModelOverrides& o = {}) {
  if (name == "generator2") {
    return generator2::make(o.set_norm.value_or(NormOrder::Inf), o.state_radius.value_or(10.0),
                            o.input_radius.value_or(5.0));
  }
  if (o.set_norm && *o.set_norm != NormOrder::Inf) {
    throw Error(ErrorCode::Unsupported, "model " + name + " only supports inf-norm sets");
  }
  if (name == "scalar_linear") {
    return make_scalar_linear(0.5, o.state_radius.value_or(10.0), o.input_radius.value_or(5.0));
  }
  if (name == "double_integrator") {
    return make_double_integrator(o.state_radius.value_or(10.0), o.input_radius.value_or(1.0));
  }
  throw Error(ErrorCode::InvalidInput, "unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Controlled K-boundedness: empirical falsification of
// ||f(x, kappa(x))|| <= sigma(||x||) on norm shells of the state set.

using StatePolicy = std::function<InputVec(const StateVec&)>;

/// ||f(x, kappa(x))|| / ||x||, undefined at the origin.
inline std::optional<double> growth_ratio(const SystemModel& model, const StatePolicy& policy,
                                          const StateVec& x, NormOrder order) {
  const double nx = norm(x, order);
  if (nx == 0.0) return std::nullopt;
  return norm(model.step(x, policy(x)), order) / nx;
}

struct ShellProfile {
  double radius;
  double max_ratio;
  int samples;
};

struct KBoundednessViolation {
  StateVec x;
  double ratio;
};

struct KBoundednessReport {
  std::vector<ShellProfile> profile;  // ordered by increasing radius
  double fitted_gain = 0.0;           // tightest c with ||f|| <= c ||x|| on the samples
  std::vector<KBoundednessViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Uniform sample on the sphere {||v|| = radius} of the given norm.
inline Eigen::VectorXd sample_on_shell(int dim, double radius, NormOrder order,
                                       std::mt19937_64& rng) {
  Eigen::VectorXd v(dim);
  switch (order) {
    case NormOrder::Two: {
      std::normal_distribution<double> g(0.0, 1.0);
      do {
        for (int i = 0; i < dim; ++i) v(i) = g(rng);
      } while (v.norm() == 0.0);
      return v * (radius / v.norm());
    }
    case NormOrder::Inf: {
      std::uniform_real_distribution<double> u(-radius, radius);
      for (int i = 0; i < dim; ++i) v(i) = u(rng);
      const int face = std::uniform_int_distribution<int>(0, dim - 1)(rng);
      v(face) = std::bernoulli_distribution(0.5)(rng) ? radius : -radius;
      return v;
    }
    case NormOrder::One: {
      std::exponential_distribution<double> e(1.0);
      std::bernoulli_distribution sign(0.5);
      double total = 0.0;
      for (int i = 0; i < dim; ++i) {
        v(i) = e(rng);
        total += v(i);
      }
      for (int i = 0; i < dim; ++i) v(i) *= (sign(rng) ? radius : -radius) / total;
      return v;
    }
  }
  return v;
}

/// Samples `samples` states spread over shells at {0.001, 0.01, 0.1, 0.5, 1}
/// times the state-set radius. The fitted gain is the largest observed ratio.
/// A sample is a violation when its ratio exceeds `growth_limit` times the
/// largest ratio on the outermost shell, i.e. the successor fails to shrink
/// with the state near the origin. Advisory: sampling can only falsify.
inline KBoundednessReport check_k_boundedness(const SystemModel& model, const StatePolicy& policy,
                                              int samples, std::uint64_t seed = 0,
                                              double growth_limit = 10.0) {
  if (samples < 1) throw Error(ErrorCode::Precondition, "k-boundedness check needs samples >= 1");
  const NormOrder order = model.state_set().order();
  const double r = model.state_set().radius();
  const std::vector<double> factors{0.001, 0.01, 0.1, 0.5, 1.0};
  std::mt19937_64 rng(seed);

  KBoundednessReport report;
  std::vector<std::vector<std::pair<StateVec, double>>> by_shell(factors.size());
  const int shells = static_cast<int>(factors.size());
  for (int s = 0; s < shells; ++s) {
    const int count = samples / shells + (s < samples % shells ? 1 : 0);
    const double radius = factors[s] * r;
    ShellProfile prof{radius, 0.0, count};
    for (int i = 0; i < count; ++i) {
      StateVec x = sample_on_shell(model.n(), radius, order, rng);
      const auto ratio = growth_ratio(model, policy, x, order);
      if (!ratio) continue;
      prof.max_ratio = std::max(prof.max_ratio, *ratio);
      by_shell[s].emplace_back(std::move(x), *ratio);
    }
    report.fitted_gain = std::max(report.fitted_gain, prof.max_ratio);
    report.profile.push_back(prof);
  }
  int outer = shells - 1;
  while (outer > 0 && report.profile[outer].samples == 0) --outer;
  const double reference = report.profile[outer].max_ratio;
  for (int s = 0; s < outer; ++s) {
    for (auto& [x, ratio] : by_shell[s]) {
      if (ratio > growth_limit * reference) report.violations.push_back({x, ratio});
    }
  }
  return report;
}

}  // namespace cdf
