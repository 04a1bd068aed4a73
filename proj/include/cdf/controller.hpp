#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdf/core.hpp"
#include "cdf/cyclic.hpp"
#include "cdf/model.hpp"
#include "cdf/nlp.hpp"
#include "cdf/storage.hpp"
#include "cdf/trajectory.hpp"

namespace cdf {

struct ControllerConfig {
  explicit ControllerConfig(KernelFunction l) : kernel(std::move(l)) {}

  int N = 4;
  int M = 1;
  int M_max = 10;
  int N_max = 12;
  ComparisonFunction rho = ComparisonFunction::linear(0.99);
  Scheme scheme = Scheme::Problem1With2;
  KernelFunction kernel;
  SolverOptions solver;
  /// Grow M (then N) online when a supply window fails. Problem 3 never adapts.
  bool adapt = true;
  WindowStart window_start = WindowStart::AfterStartup;

  void validate() const {
    if (N < 2) throw Error(ErrorCode::InvalidInput, "horizon N must be >= 2");
    if (M < 1) throw Error(ErrorCode::InvalidInput, "cycle length M must be >= 1");
    if (N > N_max) throw Error(ErrorCode::InvalidInput, "N exceeds N_max");
    if (M > M_max) throw Error(ErrorCode::InvalidInput, "M exceeds M_max");
    if (!rho.is_below_identity()) {
      throw Error(ErrorCode::InvalidInput, "rho must satisfy rho(s) < s for s > 0");
    }
  }
};

struct PredictionPlan {
  long k = 0;
  StateVec x_k;
  std::vector<InputVec> inputs;  // u*(0..L-1|k)
  std::vector<StateVec> states;  // x*(1..L|k)
  double storage = 0.0;          // V*(x(k))
  SolveStatus status = SolveStatus::Infeasible;
  int iterations = 0;
};

struct SupplyRecord {
  long k = 0;
  double supply = 0.0;        // s(x(k))
  double kernel_value = 0.0;  // l(x(k))
  StateVec tail_state;        // x^s(N|k)
  InputVec tail_input;        // u^s(N-1|k)
};

/// Causal record of realized supplies and kernel values with the current
/// cycle length and horizon.
class SupplyLedger {
 public:
  SupplyLedger() = default;
  SupplyLedger(int M, int N) : M_current(M), N_current(N) {}

  int M_current = 1;
  int N_current = 2;
  /// First time step recorded under the current horizon.
  long segment_start = 0;
  std::vector<std::string> events;

  /// Records l(x(k)) when x(k) is measured, ahead of its supply.
  void observe(long k, double kernel_value, bool resolved = true) {
    if (k != static_cast<long>(kernel_values_.size())) {
      throw Error(ErrorCode::Precondition, "kernel history must be contiguous in k");
    }
    kernel_values_.push_back(kernel_value);
    resolved_.push_back(resolved ? 1 : 0);
  }

  void append(SupplyRecord r) {
    if (r.k != static_cast<long>(records_.size())) {
      throw Error(ErrorCode::Precondition, "supply records must be contiguous in k");
    }
    if (r.k == static_cast<long>(kernel_values_.size())) observe(r.k, r.kernel_value);
    if (kernel_values_[static_cast<size_t>(r.k)] != r.kernel_value) {
      throw Error(ErrorCode::Precondition, "supply record disagrees with the kernel history");
    }
    supplies_.push_back(r.supply);
    records_.push_back(std::move(r));
  }

  long size() const { return static_cast<long>(records_.size()); }
  const std::vector<SupplyRecord>& records() const { return records_; }
  const std::vector<double>& supplies() const { return supplies_; }
  const std::vector<double>& kernel_values() const { return kernel_values_; }
  /// kernel_resolved flag per observed step.
  const std::vector<char>& resolved() const { return resolved_; }

 private:
  std::vector<SupplyRecord> records_;
  std::vector<double> supplies_;
  std::vector<double> kernel_values_;
  std::vector<char> resolved_;
};

namespace detail {

inline SolveResult horizon_one(const KernelFunction& kernel, const SystemModel& model,
                               const StateVec& x, const SolverOptions& opts) {
  ShootingProblem p(model, x, 1, stage_sum(kernel, 1, 1));
  return solve(p, std::nullopt, opts);
}

inline PredictionPlan to_plan(long k, const StateVec& x_k, SolveResult r) {
  PredictionPlan plan;
  plan.k = k;
  plan.x_k = x_k;
  plan.inputs = std::move(r.inputs);
  plan.states = std::move(r.states);
  plan.storage = r.objective_value;
  plan.status = r.status;
  plan.iterations = r.iterations;
  return plan;
}

}  // namespace detail

/// Problem 1: minimize sum_{i=0}^{N-1} l(x(i|k)) over N-1 inputs.
inline PredictionPlan solve_problem1(const ControllerConfig& cfg, const SystemModel& model,
                                     const StateVec& x_k, long k = 0,
                                     const std::optional<std::vector<InputVec>>& warm = {}) {
  if (!model.state_set().contains(x_k)) {
    throw Error(ErrorCode::Precondition, "Problem 1 needs x(k) in the state set");
  }
  ShootingProblem p(model, x_k, cfg.N - 1, stage_sum(cfg.kernel, 0, cfg.N));
  auto r = solve(p, warm, cfg.solver);
  if (r.status == SolveStatus::Infeasible) {
    throw Error(ErrorCode::Infeasible,
                "Problem 1 at k = " + std::to_string(k) + ": state set not control invariant");
  }
  return detail::to_plan(k, x_k, std::move(r));
}

/// Problem 2: the horizon-1 tail from x*(N-1|k) minimizing l(x^s(N|k)).
inline SupplyRecord solve_problem2(const ControllerConfig& cfg, const SystemModel& model,
                                   const PredictionPlan& plan) {
  const StateVec& last = plan.states.empty() ? plan.x_k : plan.states.back();
  const auto r = detail::horizon_one(cfg.kernel, model, last, cfg.solver);
  if (r.status == SolveStatus::Infeasible) {
    throw Error(ErrorCode::Infeasible, "Problem 2 at k = " + std::to_string(plan.k) +
                                           ": no admissible tail from the predicted state");
  }
  SupplyRecord rec;
  rec.k = plan.k;
  rec.tail_input = r.inputs.front();
  rec.tail_state = r.states.front();
  rec.kernel_value = cfg.kernel(plan.x_k);
  rec.supply = supply_eval(cfg.kernel, plan.x_k, rec.tail_state);
  return rec;
}

/// Drops the first input and appends `tail_input`.
inline std::vector<InputVec> shift_warm_start(const PredictionPlan& plan,
                                              const InputVec& tail_input) {
  std::vector<InputVec> out;
  out.reserve(plan.inputs.size());
  for (size_t i = 1; i < plan.inputs.size(); ++i) out.push_back(plan.inputs[i]);
  out.push_back(tail_input);
  return out;
}

/// Lengthens an input sequence applied from `x` to `length` entries with
/// horizon-1 searches at the end of its rollout. Returns false when some
/// appended step has no admissible input; a zero input is appended instead.
inline bool extend_warm_start(const KernelFunction& kernel, const SystemModel& model,
                              const StateVec& x, std::vector<InputVec>& inputs, int length,
                              const SolverOptions& opts) {
  bool admissible = true;
  StateVec last = inputs.empty() ? x : model.rollout(x, inputs).back();
  while (static_cast<int>(inputs.size()) < length) {
    const auto r = detail::horizon_one(kernel, model, last, opts);
    if (r.status == SolveStatus::Infeasible) {
      admissible = false;
      inputs.push_back(InputVec::Zero(model.m()));
    } else {
      inputs.push_back(r.inputs.front());
    }
    last = model.step(last, inputs.back());
  }
  return admissible;
}

inline bool check_cyclic_condition(const SupplyLedger& ledger, long k, int M,
                                   const ComparisonFunction& rho) {
  return cyclic_holds(ledger.supplies(), ledger.kernel_values(), k, M, rho);
}

inline double gamma(const SupplyLedger& ledger, long k, int M, const ComparisonFunction& rho) {
  return accumulated_supply(ledger.supplies(), ledger.kernel_values(), k, M, rho);
}

struct AdaptOutcome {
  bool changed = false;
  int M = 1;
  int N = 2;
};

/// One adaptation step after checking the window ending at `k` under the
/// ledger's current M: M grows up to M_max, then N grows up to N_max with M
/// reset to 1 and a new segment starting at k + 1.
inline AdaptOutcome adapt_cycle(SupplyLedger& ledger, const ControllerConfig& cfg, long k) {
  const int M = ledger.M_current;
  const bool enough = k - ledger.segment_start >= M - 1;
  if (!enough || check_cyclic_condition(ledger, k, M, cfg.rho)) {
    return {false, ledger.M_current, ledger.N_current};
  }
  const std::string at = "k=" + std::to_string(k) + ": ";
  if (M + 1 <= cfg.M_max) {
    ledger.M_current = M + 1;
    ledger.events.push_back(at + "M " + std::to_string(M) + " -> " + std::to_string(M + 1));
  } else if (ledger.N_current + 1 <= cfg.N_max) {
    ledger.events.push_back(at + "N " + std::to_string(ledger.N_current) + " -> " +
                            std::to_string(ledger.N_current + 1) + ", M reset to 1");
    ledger.N_current += 1;
    ledger.M_current = 1;
    ledger.segment_start = k + 1;
  } else {
    ledger.events.push_back(at + "M_max and N_max exhausted");
    throw Error(ErrorCode::CertificationFailure,
                "cyclic supply condition fails at M_max = " + std::to_string(cfg.M_max) +
                    " and N_max = " + std::to_string(cfg.N_max));
  }
  return {true, ledger.M_current, ledger.N_current};
}

/// Problem 3 infeasibility, split by which constraint family is to blame.
class InfeasibleError : public Error {
 public:
  enum class Cause { SetConstraints, SupplyConstraint };
  InfeasibleError(Cause cause, const std::string& what)
      : Error(ErrorCode::Infeasible, what), cause_(cause) {}
  Cause cause() const { return cause_; }

 private:
  Cause cause_;
};

/// Problem 3 at time k: Problem 1's objective over N inputs with the supply
/// constraint l(x(N|k)) - l(x(k)) <= Gamma(k, M) for k >= M. Like the
/// certificate, the constraint is dropped when the window's first kernel
/// value is below the resolution floor. The solver
/// accepts constraint violations up to tol_feas * l(x(k)), so the bound handed
/// to it is backed off by twice that amount and the realized supply never
/// exceeds Gamma itself.
struct Problem3 {
  ShootingProblem problem;
  std::optional<double> gamma;  // budget enforced at this step
};

inline Problem3 make_problem3(const ControllerConfig& cfg, const SystemModel& model,
                              const StateVec& x_k, long k, const SupplyLedger& ledger) {
  std::optional<TerminalConstraint> supply;
  std::optional<double> budget;
  if (k >= cfg.M && window_resolvable(ledger.resolved(), k, cfg.M)) {
    budget = gamma(ledger, k, cfg.M, cfg.rho);
    const double l_k = cfg.kernel(x_k);
    const KernelFunction& l = cfg.kernel;
    supply = TerminalConstraint{[l, l_k](const StateVec& x) { return l(x) - l_k; },
                                [l](const StateVec& x) { return l.gradient(x); },
                                *budget - 2.0 * cfg.solver.tol_feas * l_k,
                                std::max(l_k, std::numeric_limits<double>::min())};
  }
  return {ShootingProblem(model, x_k, cfg.N, stage_sum(cfg.kernel, 0, cfg.N), supply), budget};
}

struct Problem3Plan {
  PredictionPlan plan;
  std::optional<double> gamma;
};

inline Problem3Plan solve_problem3(const ControllerConfig& cfg, const SystemModel& model,
                                   const StateVec& x_k, long k, const SupplyLedger& ledger,
                                   const std::optional<std::vector<InputVec>>& warm = {}) {
  if (!model.state_set().contains(x_k)) {
    throw Error(ErrorCode::Precondition, "Problem 3 needs x(k) in the state set");
  }
  const auto p3 = make_problem3(cfg, model, x_k, k, ledger);
  auto r = solve(p3.problem, warm, cfg.solver);
  if (r.status == SolveStatus::Infeasible) {
    const std::string at = "Problem 3 at k = " + std::to_string(k);
    if (p3.problem.terminal) {
      ShootingProblem relaxed(model, x_k, cfg.N, stage_sum(cfg.kernel, 0, cfg.N));
      if (solve(relaxed, std::nullopt, cfg.solver).status != SolveStatus::Infeasible) {
        throw InfeasibleError(InfeasibleError::Cause::SupplyConstraint,
                              at + ": supply constraint cannot be met");
      }
    }
    throw InfeasibleError(InfeasibleError::Cause::SetConstraints,
                          at + ": state and input sets admit no plan");
  }
  return {detail::to_plan(k, x_k, std::move(r)), p3.gamma};
}

/// Diagnostics of a closed-loop run that do not belong in the trajectory log.
struct RunResult {
  TrajectoryLog log;
  SupplyLedger ledger;
  bool completed = false;
  std::string halt_reason;
  /// Adaptation caps were exhausted; the run continued without a certificate.
  bool certification_failed = false;
  /// Per step: the next solve's warm start was feasible for it.
  std::vector<bool> warm_start_feasible;
  /// Steps at which no admissible tail element existed for the shift.
  std::vector<long> missing_tail;
  /// Steps whose applied input or successor state left its set.
  std::vector<long> set_violations;
};

namespace detail {

/// First failing window end in [first, last] for cycle length M, if any.
inline std::optional<long> first_failing_window(const SupplyLedger& ledger, long first, long last,
                                                int M, const ComparisonFunction& rho) {
  for (long end = std::max(first, static_cast<long>(M - 1)); end <= last; ++end) {
    if (!window_resolvable(ledger.resolved(), end, M)) continue;
    if (!check_cyclic_condition(ledger, end, M, rho)) return end;
  }
  return std::nullopt;
}

}  // namespace detail

/// Receding-horizon closed loop over `steps` steps. Problem 1 with the
/// Problem 2 supply adapts (M, N) online so that every required window seen
/// so far passes; Problem 3 enforces the supply budget inside the plan.
inline RunResult closed_loop(const ControllerConfig& cfg, const SystemModel& model,
                             const StateVec& x0, long steps) {
  cfg.validate();
  if (steps < 1) throw Error(ErrorCode::InvalidInput, "steps must be >= 1");
  if (x0.size() != model.n()) throw Error(ErrorCode::DimensionMismatch, "x0 does not match model");
  if (cfg.kernel.dimension() != model.n()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel does not match model");
  }
  if (!model.state_set().contains(x0)) {
    throw Error(ErrorCode::Precondition, "x0 must lie in the state set");
  }

  RunResult run;
  auto& log = run.log;
  log.meta.model = model.name();
  log.meta.n = model.n();
  log.meta.m = model.m();
  log.meta.steps = steps;
  log.meta.scheme = cfg.scheme;
  log.meta.rho_gain = cfg.rho.linear_gain();
  log.meta.Q = cfg.kernel.weight();
  log.meta.M_max = cfg.M_max;
  log.meta.N_max = cfg.N_max;
  log.meta.tol_stat = cfg.solver.tol_stat;
  log.meta.tol_feas = cfg.solver.tol_feas;
  log.meta.window_start = cfg.window_start;

  SupplyLedger& ledger = run.ledger;
  ledger.M_current = cfg.M;
  ledger.N_current = cfg.N;
  const bool p3 = cfg.scheme == Scheme::Problem3;
  const bool adapt = cfg.adapt && !p3;

  StateVec x = x0;
  std::optional<std::vector<InputVec>> warm;
  for (long k = 0; k < steps; ++k) {
    ControllerConfig step_cfg = cfg;
    step_cfg.N = ledger.N_current;
    step_cfg.M = ledger.M_current;
    const int M = ledger.M_current;

    TrajectoryRow row;
    row.k = k;
    row.x = x;
    row.l = cfg.kernel(x);
    row.M = M;
    row.N = ledger.N_current;
    ledger.observe(k, row.l, kernel_resolved(x, row.l));
    const long rel = k - ledger.segment_start;
    if (!p3 && rel >= M) row.gamma = gamma(ledger, k, M, cfg.rho);

    PredictionPlan plan;
    SupplyRecord rec;
    const int warm_len = p3 ? step_cfg.N : step_cfg.N - 1;
    if (warm && static_cast<int>(warm->size()) < warm_len) {
      if (!extend_warm_start(cfg.kernel, model, x, *warm, warm_len, cfg.solver)) {
        run.missing_tail.push_back(k);
      }
    }
    try {
      if (p3) {
        if (warm) {
          const auto probe = make_problem3(step_cfg, model, x, k, ledger);
          run.warm_start_feasible.push_back(
              check_feasible(probe.problem, *warm, cfg.solver.tol_feas).feasible);
        }
        auto solved = solve_problem3(step_cfg, model, x, k, ledger, warm);
        plan = std::move(solved.plan);
        row.gamma = solved.gamma;
        rec.k = k;
        rec.kernel_value = row.l;
        rec.tail_state = plan.states.back();
        rec.tail_input = plan.inputs.back();
        rec.supply = supply_eval(cfg.kernel, x, rec.tail_state);
      } else {
        if (warm) {
          const ShootingProblem probe(model, x, step_cfg.N - 1,
                                      stage_sum(cfg.kernel, 0, step_cfg.N));
          run.warm_start_feasible.push_back(
              check_feasible(probe, *warm, cfg.solver.tol_feas).feasible);
        }
        plan = solve_problem1(step_cfg, model, x, k, warm);
        rec = solve_problem2(step_cfg, model, plan);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible) throw;
      run.halt_reason = e.what();
      log.rows.push_back(row);
      return run;
    }
    row.u = plan.inputs.front();
    row.V = plan.storage;
    row.s = rec.supply;
    row.status = plan.status;
    ledger.append(rec);

    // Supply window ending at k under the M in force at the start of the step.
    if (rel >= first_required_window_end(M, cfg.window_start) &&
        window_resolvable(ledger.resolved(), k, M)) {
      row.cyclic = check_cyclic_condition(ledger, k, M, cfg.rho);
    }
    if (adapt && row.cyclic == false && !run.certification_failed) {
      try {
        long failing = k;
        for (;;) {
          const int n_before = ledger.N_current;
          adapt_cycle(ledger, step_cfg, failing);
          step_cfg.M = ledger.M_current;
          if (ledger.N_current != n_before) {
            ledger.segment_start = k + 1;
            break;
          }
          // A longer cycle must also pass every earlier window of the segment.
          const long first = ledger.segment_start +
                             first_required_window_end(ledger.M_current, cfg.window_start);
          const auto fail =
              detail::first_failing_window(ledger, first, k, ledger.M_current, cfg.rho);
          if (!fail) break;
          failing = *fail;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::CertificationFailure) throw;
        run.certification_failed = true;
      }
    }

    // Shifted warm start for the next step.
    std::vector<InputVec> next;
    if (p3) {
      const auto tail = detail::horizon_one(cfg.kernel, model, plan.states.back(), cfg.solver);
      if (tail.status == SolveStatus::Infeasible) {
        run.missing_tail.push_back(k);
        next = shift_warm_start(plan, InputVec::Zero(model.m()));
      } else {
        next = shift_warm_start(plan, tail.inputs.front());
      }
    } else {
      next = shift_warm_start(plan, rec.tail_input);
    }

    const InputVec& u = *row.u;
    const StateVec x_next = model.step(x, u);
    if (!model.input_set().contains(u) || !model.state_set().contains(x_next)) {
      run.set_violations.push_back(k);
    }
    log.rows.push_back(std::move(row));
    x = x_next;
    warm = std::move(next);
  }

  TrajectoryRow last;
  last.k = steps;
  last.x = x;
  last.l = cfg.kernel(x);
  last.M = ledger.M_current;
  last.N = ledger.N_current;
  log.rows.push_back(std::move(last));
  run.completed = true;
  return run;
}

}  // namespace cdf
