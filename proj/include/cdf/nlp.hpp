#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdf/core.hpp"
#include "cdf/model.hpp"
#include "cdf/storage.hpp"

namespace cdf {

struct SolverOptions {
  double tol_stat = kTolStat;  // projected-gradient norm of the scaled merit
  double tol_feas = kTolFeas;  // constraint violation accepted as feasible
  int max_outer = 30;
  int max_inner = 500;
  double penalty_init = 1.0;
  double penalty_growth = 10.0;
  double multiplier_max = 1e8;
};

/// Objective over the rolled-out states x(0), ..., x(L). When `grad` is
/// non-null it receives d(objective)/dx(i) for every state.
using ObjectiveFn =
    std::function<double(const std::vector<StateVec>& states, std::vector<StateVec>* grad)>;

/// Sum of kernel values over states [first, first + count).
inline ObjectiveFn stage_sum(KernelFunction kernel, int first, int count) {
  return [kernel = std::move(kernel), first, count](const std::vector<StateVec>& states,
                                                    std::vector<StateVec>* grad) {
    if (first < 0 || first + count > static_cast<int>(states.size())) {
      throw Error(ErrorCode::Precondition, "stage sum range outside the rollout");
    }
    double total = 0.0;
    for (int i = first; i < first + count; ++i) {
      total += kernel(states[i]);
      if (grad) (*grad)[i] += kernel.gradient(states[i]);
    }
    return total;
  };
}

/// Scalar inequality g(x(L)) <= bound on the last predicted state. The
/// violation is reported in units of `scale`.
struct TerminalConstraint {
  std::function<double(const StateVec&)> value;
  std::function<StateVec(const StateVec&)> gradient;
  double bound = 0.0;
  double scale = 1.0;
};

/// Finite-horizon single-shooting problem: the decision variables are the L
/// inputs, the states are eliminated by rolling the model forward from x0.
struct ShootingProblem {
  SystemModel model;
  StateVec x0;
  int horizon;  // number of inputs L
  ObjectiveFn objective;
  std::optional<TerminalConstraint> terminal;
  NormBallSet input_set;
  NormBallSet state_set;

  ShootingProblem(SystemModel m, StateVec x_init, int l, ObjectiveFn obj,
                  std::optional<TerminalConstraint> extra = std::nullopt)
      : model(std::move(m)),
        x0(std::move(x_init)),
        horizon(l),
        objective(std::move(obj)),
        terminal(std::move(extra)),
        input_set(model.input_set()),
        state_set(model.state_set()) {
    if (horizon < 1) throw Error(ErrorCode::Precondition, "shooting horizon must be >= 1");
    if (x0.size() != model.n()) {
      throw Error(ErrorCode::DimensionMismatch, "initial state does not match model");
    }
    require_finite(x0, "initial state");
  }
};

enum class SolveStatus { Optimal, FeasibleImproved, WarmStartReturned, Infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::FeasibleImproved: return "FeasibleImproved";
    case SolveStatus::WarmStartReturned: return "WarmStartReturned";
    case SolveStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

inline SolveStatus parse_solve_status(const std::string& text) {
  for (auto s : {SolveStatus::Optimal, SolveStatus::FeasibleImproved,
                 SolveStatus::WarmStartReturned, SolveStatus::Infeasible}) {
    if (text == to_string(s)) return s;
  }
  throw Error(ErrorCode::Parse, "unknown solver status '" + text + "'");
}

struct SolveResult {
  std::vector<InputVec> inputs;
  std::vector<StateVec> states;  // x(1), ..., x(L)
  double objective_value = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  int iterations = 0;
  double max_constraint_violation = 0.0;
};

struct Feasibility {
  bool feasible;
  double max_violation;
};

namespace detail {

inline Eigen::VectorXd stack(const std::vector<InputVec>& inputs, int m) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(inputs.size()) * m);
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != m) throw Error(ErrorCode::DimensionMismatch, "input sequence entry");
    z.segment(static_cast<Eigen::Index>(i) * m, m) = inputs[i];
  }
  return z;
}

inline std::vector<InputVec> unstack(const Eigen::VectorXd& z, int m) {
  std::vector<InputVec> inputs(static_cast<size_t>(z.size() / m));
  for (size_t i = 0; i < inputs.size(); ++i) {
    inputs[i] = z.segment(static_cast<Eigen::Index>(i) * m, m);
  }
  return inputs;
}

struct Trajectory {
  std::vector<StateVec> states;  // x(0), ..., x(L)
  std::vector<Jacobians> jac;    // at (x(i), u(i)), i < L
};

inline Trajectory simulate(const ShootingProblem& p, const std::vector<InputVec>& inputs,
                           bool with_jacobians) {
  Trajectory t;
  t.states.reserve(inputs.size() + 1);
  t.states.push_back(p.x0);
  for (const auto& u : inputs) {
    if (with_jacobians) t.jac.push_back(p.model.jacobians(t.states.back(), u));
    t.states.push_back(p.model.step(t.states.back(), u));
  }
  return t;
}

/// Reverse accumulation: given d(phi)/dx(i) seeds, returns d(phi)/du stacked.
inline Eigen::VectorXd backpropagate(const Trajectory& t, const std::vector<StateVec>& seeds,
                                     int m) {
  const int steps = static_cast<int>(t.jac.size());
  Eigen::VectorXd g(static_cast<Eigen::Index>(steps) * m);
  StateVec adjoint = seeds[steps];
  for (int i = steps - 1; i >= 0; --i) {
    g.segment(static_cast<Eigen::Index>(i) * m, m) = t.jac[i].du.transpose() * adjoint;
    adjoint = seeds[i] + t.jac[i].dx.transpose() * adjoint;
  }
  return g;
}

inline std::vector<StateVec> zero_seeds(const Trajectory& t) {
  std::vector<StateVec> seeds;
  seeds.reserve(t.states.size());
  for (const auto& x : t.states) seeds.push_back(StateVec::Zero(x.size()));
  return seeds;
}

/// Scaled inequality constraints c_j <= 0 of the state set and the terminal
/// constraint, with gradients folded into the state seeds.
class ConstraintSet {
 public:
  explicit ConstraintSet(const ShootingProblem& p) : p_(p) {}

  /// Number of scalar constraints for a rollout of L inputs.
  int count() const {
    const int per_state = p_.state_set.order() == NormOrder::Inf ? p_.model.n() : 1;
    return p_.horizon * per_state + (p_.terminal ? 1 : 0);
  }

  /// Fills c (size count()). When `seeds` and `weights` are given, adds
  /// weights_j * dc_j/dx to the seeds.
  void evaluate(const Trajectory& t, Eigen::VectorXd& c, std::vector<StateVec>* seeds = nullptr,
                const Eigen::VectorXd* weights = nullptr) const {
    c.resize(count());
    const double r = p_.state_set.radius();
    const int n = p_.model.n();
    int j = 0;
    for (int i = 1; i <= p_.horizon; ++i) {
      const StateVec& x = t.states[i];
      switch (p_.state_set.order()) {
        case NormOrder::Inf:
          for (int d = 0; d < n; ++d, ++j) {
            c(j) = (std::abs(x(d)) - r) / r;
            if (seeds && (*weights)(j) != 0.0) {
              (*seeds)[i](d) += (*weights)(j) * (x(d) >= 0.0 ? 1.0 : -1.0) / r;
            }
          }
          break;
        case NormOrder::Two:
          c(j) = (x.squaredNorm() - r * r) / (r * r);
          if (seeds && (*weights)(j) != 0.0) (*seeds)[i] += (*weights)(j) * 2.0 * x / (r * r);
          ++j;
          break;
        case NormOrder::One:
          c(j) = (x.lpNorm<1>() - r) / r;
          if (seeds && (*weights)(j) != 0.0) {
            (*seeds)[i] += (*weights)(j) * x.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; }) / r;
          }
          ++j;
          break;
      }
    }
    if (p_.terminal) {
      const auto& tc = *p_.terminal;
      const StateVec& xl = t.states.back();
      c(j) = (tc.value(xl) - tc.bound) / tc.scale;
      if (seeds && (*weights)(j) != 0.0) (*seeds).back() += (*weights)(j) * tc.gradient(xl) / tc.scale;
    }
  }

 private:
  const ShootingProblem& p_;
};

/// Constraint violation in problem units: absolute norm excess for sets,
/// scaled excess for the terminal constraint.
inline double violation(const ShootingProblem& p, const std::vector<InputVec>& inputs,
                        const Trajectory& t) {
  double v = 0.0;
  for (const auto& u : inputs) v = std::max(v, p.input_set.violation(u));
  for (size_t i = 1; i < t.states.size(); ++i) v = std::max(v, p.state_set.violation(t.states[i]));
  if (p.terminal) {
    const auto& tc = *p.terminal;
    v = std::max(v, (tc.value(t.states.back()) - tc.bound) / tc.scale);
  }
  return v;
}

inline Eigen::VectorXd project_inputs(const ShootingProblem& p, const Eigen::VectorXd& z) {
  const int m = p.model.m();
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); i += m) {
    out.segment(i, m) = p.input_set.project(z.segment(i, m));
  }
  return out;
}

/// Augmented-Lagrangian merit: scale * f + sum_j psi(c_j; lambda_j, mu).
class Merit {
 public:
  Merit(const ShootingProblem& p, const ConstraintSet& cons) : p_(p), cons_(cons) {}

  double scale = 1.0;
  double mu = 1.0;
  Eigen::VectorXd lambda;

  /// Returns the merit and fills its gradient. Throws on non-finite values.
  double evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
    const auto inputs = unstack(z, p_.model.m());
    const Trajectory t = simulate(p_, inputs, grad != nullptr);
    std::vector<StateVec> seeds = zero_seeds(t);
    const double f = p_.objective(t.states, grad ? &seeds : nullptr);
    if (!std::isfinite(f)) throw Error(ErrorCode::NumericOverflow, "non-finite objective");
    if (grad) {
      for (auto& s : seeds) s *= scale;
    }
    Eigen::VectorXd c;
    cons_.evaluate(t, c);
    Eigen::VectorXd shifted = (lambda + mu * c).cwiseMax(0.0);
    double merit = scale * f + (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * mu);
    if (grad) {
      cons_.evaluate(t, c, &seeds, &shifted);
      *grad = backpropagate(t, seeds, p_.model.m());
    }
    if (!std::isfinite(merit)) throw Error(ErrorCode::NumericOverflow, "non-finite merit");
    return merit;
  }

 private:
  const ShootingProblem& p_;
  const ConstraintSet& cons_;
};

struct InnerResult {
  Eigen::VectorXd z;
  int iterations = 0;
  bool stationary = false;
};

inline double projected_gradient_norm(const ShootingProblem& p, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& g) {
  return (project_inputs(p, z - g) - z).lpNorm<Eigen::Infinity>();
}

/// Projected quasi-Newton minimization of the merit over the input set.
/// For box input sets the free/active split follows the projected-Newton
/// scheme; other sets fall back to projected steps along -B^{-1} g.
inline InnerResult minimize_merit(const ShootingProblem& p, const Merit& merit, Eigen::VectorXd z,
                                  const SolverOptions& opts) {
  const Eigen::Index dim = z.size();
  const bool box = p.input_set.order() == NormOrder::Inf;
  const double r = p.input_set.radius();
  InnerResult out;
  z = project_inputs(p, z);
  Eigen::VectorXd g;
  double phi = merit.evaluate(z, &g);
  Matrix hess = Matrix::Identity(dim, dim);
  bool scaled = false;
  int stalls = 0;

  for (int it = 0; it < opts.max_inner; ++it) {
    const double pg = projected_gradient_norm(p, z, g);
    if (pg <= opts.tol_stat) {
      out.stationary = true;
      break;
    }
    out.iterations = it + 1;

    auto direction = [&](bool quasi_newton) {
      Eigen::VectorXd d = -g;
      if (!quasi_newton) return d;
      if (!box) {
        Eigen::LDLT<Matrix> ldlt(hess);
        Eigen::VectorXd qn = ldlt.solve(-g);
        if (ldlt.info() == Eigen::Success && qn.allFinite() && g.dot(qn) < 0.0) d = qn;
        return d;
      }
      const double eps = std::min(1e-3 * r, pg);
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < dim; ++i) {
        const bool at_upper = z(i) >= r - eps && g(i) < 0.0;
        const bool at_lower = z(i) <= -r + eps && g(i) > 0.0;
        if (!(at_upper || at_lower)) free.push_back(i);
      }
      if (free.empty()) return d;
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = g(free[a]);
        for (Eigen::Index b = 0; b < nf; ++b) hf(a, b) = hess(free[a], free[b]);
      }
      Eigen::LDLT<Matrix> ldlt(hf);
      Eigen::VectorXd df = ldlt.solve(-gf);
      if (ldlt.info() != Eigen::Success || !df.allFinite() || gf.dot(df) >= 0.0) return d;
      for (Eigen::Index i = 0; i < dim; ++i) d(i) = -g(i) / std::max(hess(i, i), 1e-12);
      for (Eigen::Index a = 0; a < nf; ++a) d(free[a]) = df(a);
      return d;
    };

    auto line_search = [&](const Eigen::VectorXd& d, Eigen::VectorXd& z_new, double& phi_new,
                           Eigen::VectorXd& g_new) {
      // Before any curvature is known, start from the step that would reach
      // zero merit on a quadratic; plain unit steps overshoot by the inverse
      // problem scale when the inputs are tiny.
      double alpha = scaled ? 1.0 : std::min(1.0, 2.0 * std::abs(phi) / g.squaredNorm());
      if (!(alpha > 0.0)) alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        z_new = project_inputs(p, z + alpha * d);
        const double predicted = g.dot(z_new - z);
        if (predicted >= 0.0) continue;
        try {
          phi_new = merit.evaluate(z_new, &g_new);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NumericOverflow) throw;
          continue;
        }
        if (phi_new <= phi + 1e-4 * predicted) return true;
      }
      return false;
    };

    Eigen::VectorXd z_new, g_new;
    double phi_new = phi;
    bool accepted = line_search(direction(true), z_new, phi_new, g_new);
    if (!accepted) {
      hess.setIdentity();
      scaled = false;
      accepted = line_search(direction(false), z_new, phi_new, g_new);
    }
    if (!accepted) break;

    const Eigen::VectorXd s = z_new - z;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        hess = Matrix::Identity(dim, dim) * (y.squaredNorm() / sy);
        scaled = true;
      }
      const Eigen::VectorXd hs = hess * s;
      hess += (y * y.transpose()) / sy - (hs * hs.transpose()) / s.dot(hs);
    }
    const double decrease = phi - phi_new;
    stalls = decrease <= 1e-15 * std::max(1.0, std::abs(phi)) ? stalls + 1 : 0;
    z = std::move(z_new);
    g = std::move(g_new);
    phi = phi_new;
    if (stalls >= 5) break;
  }
  if (!out.stationary) out.stationary = projected_gradient_norm(p, z, g) <= opts.tol_stat;
  out.z = std::move(z);
  return out;
}

}  // namespace detail

/// Gradient of the objective with respect to the stacked inputs, by reverse
/// accumulation through the rollout.
inline Eigen::VectorXd evaluate_objective_gradient(const ShootingProblem& p,
                                                   const std::vector<InputVec>& inputs) {
  if (static_cast<int>(inputs.size()) != p.horizon) {
    throw Error(ErrorCode::Precondition, "input sequence length differs from the horizon");
  }
  const auto t = detail::simulate(p, inputs, true);
  auto seeds = detail::zero_seeds(t);
  const double f = p.objective(t.states, &seeds);
  if (!std::isfinite(f)) throw Error(ErrorCode::NumericOverflow, "non-finite objective");
  return detail::backpropagate(t, seeds, p.model.m());
}

inline double evaluate_objective(const ShootingProblem& p, const std::vector<InputVec>& inputs) {
  const auto t = detail::simulate(p, inputs, false);
  return p.objective(t.states, nullptr);
}

inline Feasibility check_feasible(const ShootingProblem& p, const std::vector<InputVec>& inputs,
                                  double tol_feas = kTolFeas) {
  if (static_cast<int>(inputs.size()) != p.horizon) {
    throw Error(ErrorCode::Precondition, "input sequence length differs from the horizon");
  }
  const auto t = detail::simulate(p, inputs, false);
  const double v = detail::violation(p, inputs, t);
  return {v <= tol_feas, v};
}

/// Minimizes the objective over input sequences in the input set subject to
/// the state set and the optional terminal constraint.
///
/// Contract: with a feasible warm start the returned objective is never
/// larger than the warm start's. The objective is normalized by its value at
/// the current iterate, so stationarity is measured relative to the problem's
/// own scale and the solver is equally accurate near the origin.
inline SolveResult solve(const ShootingProblem& p,
                         const std::optional<std::vector<InputVec>>& warm_start = std::nullopt,
                         const SolverOptions& opts = {}) {
  if (!(opts.tol_stat > 0.0) || !(opts.tol_feas > 0.0)) {
    throw Error(ErrorCode::Precondition, "solver tolerances must be positive");
  }
  const int m = p.model.m();
  std::vector<InputVec> start;
  if (warm_start) {
    if (static_cast<int>(warm_start->size()) != p.horizon) {
      throw Error(ErrorCode::Precondition, "warm start length differs from the horizon");
    }
    start = *warm_start;
  } else {
    start.assign(static_cast<size_t>(p.horizon), InputVec::Zero(m));
  }

  struct Candidate {
    Eigen::VectorXd z;
    double objective;
    double violation;
  };
  auto assess = [&](const Eigen::VectorXd& z) {
    const auto inputs = detail::unstack(z, m);
    const auto t = detail::simulate(p, inputs, false);
    const double f = p.objective(t.states, nullptr);
    if (!std::isfinite(f)) throw Error(ErrorCode::NumericOverflow, "non-finite objective");
    return Candidate{z, f, detail::violation(p, inputs, t)};
  };

  std::optional<Candidate> warm;
  if (warm_start) {
    Candidate c = assess(detail::stack(start, m));
    if (c.violation <= opts.tol_feas) warm = c;
  }

  detail::ConstraintSet cons(p);
  detail::Merit merit(p, cons);
  merit.mu = opts.penalty_init;
  merit.lambda = Eigen::VectorXd::Zero(cons.count());

  Eigen::VectorXd z = detail::project_inputs(p, detail::stack(start, m));
  Candidate current = assess(z);
  std::optional<Candidate> best_feasible;
  auto offer = [&](const Candidate& c) {
    if (c.violation <= opts.tol_feas &&
        (!best_feasible || c.objective <= best_feasible->objective)) {
      best_feasible = c;
    }
  };
  offer(current);

  auto scale_for = [](double f) {
    return 1.0 / std::clamp(std::abs(f), 1e-300, 1e300);
  };
  merit.scale = scale_for(current.objective);

  int iterations = 0;
  bool converged = false;
  double prev_violation = std::numeric_limits<double>::infinity();
  Candidate least_violating = current;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const double f_before = current.objective;
    const auto inner = detail::minimize_merit(p, merit, z, opts);
    iterations += inner.iterations;
    z = inner.z;
    current = assess(z);
    offer(current);
    if (current.violation < least_violating.violation) least_violating = current;

    const auto t = detail::simulate(p, detail::unstack(z, m), false);
    Eigen::VectorXd c;
    cons.evaluate(t, c);
    const bool feasible = current.violation <= opts.tol_feas;
    const bool rescale = std::abs(current.objective) < 0.1 * std::abs(f_before);
    if (feasible && inner.stationary && !rescale) {
      converged = true;
      break;
    }
    merit.lambda = (merit.lambda + merit.mu * c).cwiseMax(0.0).cwiseMin(opts.multiplier_max);
    if (!feasible && current.violation > 0.25 * prev_violation) merit.mu *= opts.penalty_growth;
    prev_violation = current.violation;
    // Keep the merit normalized to the current objective magnitude; lambda
    // and mu scale with it so the augmented Lagrangian is unchanged.
    const double new_scale = scale_for(current.objective);
    const double ratio = new_scale / merit.scale;
    merit.scale = new_scale;
    merit.lambda *= ratio;
    merit.mu *= ratio;
  }

  SolveResult result;
  result.iterations = iterations;
  const Candidate* chosen = nullptr;
  if (best_feasible) {
    chosen = &*best_feasible;
    const bool final_is_best = current.violation <= opts.tol_feas &&
                               current.objective <= best_feasible->objective;
    if (final_is_best) chosen = &current;
    if (chosen == &current && converged && (!warm || current.objective <= warm->objective)) {
      result.status = SolveStatus::Optimal;
    } else if (warm && chosen->objective >= warm->objective) {
      chosen = &*warm;
      result.status = SolveStatus::WarmStartReturned;
    } else {
      result.status = SolveStatus::FeasibleImproved;
    }
  } else {
    chosen = &least_violating;
    result.status = SolveStatus::Infeasible;
  }
  result.inputs = detail::unstack(chosen->z, m);
  result.states = p.model.rollout(p.x0, result.inputs);
  result.objective_value = chosen->objective;
  result.max_constraint_violation = chosen->violation;
  return result;
}

}  // namespace cdf
