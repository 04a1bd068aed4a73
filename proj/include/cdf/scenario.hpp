#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

#include "cdf/analysis.hpp"
#include "cdf/controller.hpp"
#include "cdf/io.hpp"
#include "cdf/model.hpp"

namespace cdf {

/// A closed-loop experiment as read from a scenario file.
struct Scenario {
  std::string name;  // file stem
  std::string model = "generator2";
  ModelOverrides overrides;
  StateVec x0;
  long steps = 600;
  Scheme scheme = Scheme::Problem1With2;
  int N = 4;
  int M = 1;
  int M_max = 10;
  int N_max = 12;
  double rho = 0.99;
  Matrix Q;
  bool adapt = true;
  WindowStart window_start = WindowStart::AfterStartup;
  SolverOptions solver;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  double settle_eps = 1e-3;

  ControllerConfig controller() const {
    ControllerConfig cfg{KernelFunction(Q)};
    cfg.N = N;
    cfg.M = M;
    cfg.M_max = M_max;
    cfg.N_max = N_max;
    cfg.rho = ComparisonFunction::linear(rho);
    cfg.scheme = scheme;
    cfg.solver = solver;
    cfg.adapt = adapt;
    cfg.window_start = window_start;
    return cfg;
  }

  /// Checks cross-field consistency; throws a config error naming the field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& what) {
      throw Error(ErrorCode::Config, field + ": " + what);
    };
    const SystemModel m = make_model(model, overrides);
    if (x0.size() != m.n()) fail("run.x0", "dimension does not match model " + model);
    if (Q.rows() != m.n()) fail("controller.Q", "dimension does not match model " + model);
    if (steps < 1) fail("run.steps", "must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) fail("controller.rho", "must lie in (0, 1)");
    if (!(settle_eps > 0.0)) fail("run.settle_eps", "must be positive");
    try {
      controller().validate();
    } catch (const Error& e) {
      fail("controller", e.what());
    }
  }
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& scenario_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"model", {"name", "set_norm", "state_radius", "input_radius"}},
      {"controller",
       {"scheme", "N", "M", "M_max", "N_max", "rho", "Q", "adapt", "window_start"}},
      {"solver",
       {"tol_stat", "tol_feas", "max_outer", "max_inner", "penalty_init", "penalty_growth",
        "multiplier_max"}},
      {"run", {"x0", "steps", "out_dir", "seed", "settle_eps"}},
  };
  return keys;
}

[[noreturn]] inline void config_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::Config, where + ": " + what);
}

}  // namespace detail

/// Parses an INI scenario. Unknown sections or keys are errors; list values
/// (x0, Q) are JSON arrays.
inline Scenario parse_scenario(std::istream& in, const std::string& origin = "<scenario>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Config, origin + ": " + e.message() + " (line " +
                                       std::to_string(e.line()) + ")");
  }
  auto fail = [&origin](const std::string& field, const std::string& what) {
    detail::config_fail(origin + ": " + field, what);
  };
  const auto& keys = detail::scenario_keys();
  for (const auto& [section, body] : tree) {
    const auto it = keys.find(section);
    if (it == keys.end()) fail(section, "unknown section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) fail(section + "." + key, "unknown key");
    }
  }

  auto text = [&](const std::string& field) -> std::optional<std::string> {
    const auto v = tree.get_optional<std::string>(pt::ptree::path_type(field, '.'));
    if (!v) return std::nullopt;
    return *v;
  };
  auto number = [&](const std::string& field) -> std::optional<double> {
    const auto t = text(field);
    if (!t) return std::nullopt;
    try {
      size_t used = 0;
      const double v = std::stod(*t, &used);
      if (used != t->size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      detail::config_fail(origin + ": " + field, "not a number: '" + *t + "'");
    }
  };
  auto integer = [&](const std::string& field) -> std::optional<long> {
    const auto t = text(field);
    if (!t) return std::nullopt;
    try {
      size_t used = 0;
      const long v = std::stol(*t, &used);
      if (used != t->size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      detail::config_fail(origin + ": " + field, "not an integer: '" + *t + "'");
    }
  };
  auto json = [&](const std::string& field) -> std::optional<nlohmann::json> {
    const auto t = text(field);
    if (!t) return std::nullopt;
    try {
      return nlohmann::json::parse(*t);
    } catch (const nlohmann::json::exception&) {
      detail::config_fail(origin + ": " + field, "not a list: '" + *t + "'");
    }
  };
  auto require = [&](const std::string& field) {
    if (!text(field)) fail(field, "required");
  };

  Scenario s;
  s.name = origin;
  try {
    require("model.name");
    s.model = *text("model.name");
    if (auto v = text("model.set_norm")) s.overrides.set_norm = parse_norm_order(*v);
    if (auto v = number("model.state_radius")) s.overrides.state_radius = *v;
    if (auto v = number("model.input_radius")) s.overrides.input_radius = *v;

    if (auto v = text("controller.scheme")) s.scheme = parse_scheme(*v);
    if (auto v = integer("controller.N")) s.N = static_cast<int>(*v);
    if (auto v = integer("controller.M")) s.M = static_cast<int>(*v);
    if (auto v = integer("controller.M_max")) s.M_max = static_cast<int>(*v);
    if (auto v = integer("controller.N_max")) s.N_max = static_cast<int>(*v);
    if (auto v = number("controller.rho")) s.rho = *v;
    require("controller.Q");
    s.Q = detail::parse_matrix(*json("controller.Q"), "controller.Q");
    if (auto v = text("controller.adapt")) {
      if (*v != "true" && *v != "false") fail("controller.adapt", "expected true or false");
      s.adapt = *v == "true";
    }
    if (auto v = text("controller.window_start")) s.window_start = parse_window_start(*v);

    if (auto v = number("solver.tol_stat")) s.solver.tol_stat = *v;
    if (auto v = number("solver.tol_feas")) s.solver.tol_feas = *v;
    if (auto v = integer("solver.max_outer")) s.solver.max_outer = static_cast<int>(*v);
    if (auto v = integer("solver.max_inner")) s.solver.max_inner = static_cast<int>(*v);
    if (auto v = number("solver.penalty_init")) s.solver.penalty_init = *v;
    if (auto v = number("solver.penalty_growth")) s.solver.penalty_growth = *v;
    if (auto v = number("solver.multiplier_max")) s.solver.multiplier_max = *v;

    require("run.x0");
    const auto x0 = *json("run.x0");
    if (!x0.is_array()) fail("run.x0", "expected a list");
    s.x0.resize(static_cast<Eigen::Index>(x0.size()));
    for (size_t i = 0; i < x0.size(); ++i) {
      if (!x0[i].is_number()) fail("run.x0", "expected numbers");
      s.x0(static_cast<Eigen::Index>(i)) = x0[i].get<double>();
    }
    if (auto v = integer("run.steps")) s.steps = *v;
    if (auto v = text("run.out_dir")) s.out_dir = *v;
    if (auto v = integer("run.seed")) {
      if (*v < 0) fail("run.seed", "must be >= 0");
      s.seed = static_cast<std::uint64_t>(*v);
    }
    if (auto v = number("run.settle_eps")) s.settle_eps = *v;
    s.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    throw Error(ErrorCode::Config, origin + ": " + e.what());
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open scenario '" + path + "'");
  auto s = parse_scenario(in, path);
  s.name = std::filesystem::path(path).stem().string();
  return s;
}

/// Outcome of one scenario run with its persisted report.
struct ScenarioOutcome {
  RunResult run;
  CertificateReport certificate;
  ConvergenceMetrics metrics;
  bool converged = false;
  std::string summary;
};

namespace detail {

inline std::string write_summary(const Scenario& sc, const ScenarioOutcome& o,
                                 const StorageBoundsReport& bounds,
                                 const KBoundednessReport& kb) {
  const auto& run = o.run;
  std::ostringstream t;
  auto opt_long = [](const std::optional<long>& v) {
    return v ? std::to_string(*v) : std::string("never");
  };
  long warm_ok = 0;
  for (bool b : run.warm_start_feasible) warm_ok += b ? 1 : 0;
  t << "scenario: " << sc.name << "\n";
  t << "model: " << sc.model << "\n";
  t << "scheme: " << to_string(sc.scheme) << "\n";
  t << "steps: " << sc.steps << "\n";
  t << "initial N: " << sc.N << "\n";
  t << "initial M: " << sc.M << "\n";
  t << "final N: " << o.certificate.N << "\n";
  t << "final M: " << o.certificate.M << "\n";
  t << "completed: " << (run.completed ? "yes" : "no") << "\n";
  if (!run.halt_reason.empty()) t << "halt reason: " << run.halt_reason << "\n";
  t << "adaptation caps exhausted: " << (run.certification_failed ? "yes" : "no") << "\n";
  for (const auto& e : run.ledger.events) t << "event: " << e << "\n";
  t << "settle epsilon: " << format_double(sc.settle_eps) << "\n";
  t << "settle time (finite-horizon surrogate for convergence): " << opt_long(o.metrics.settle_time)
    << "\n";
  t << "converged: " << (o.converged ? "yes" : "no") << "\n";
  t << "final norm: " << format_double(o.metrics.final_norm) << "\n";
  t << "monotone V fraction: " << format_double(o.metrics.monotone_v_fraction) << "\n";
  t << "warm starts feasible: " << warm_ok << "/" << run.warm_start_feasible.size() << "\n";
  t << "steps without admissible tail: " << run.missing_tail.size() << "\n";
  t << "steps leaving the sets: " << run.set_violations.size() << "\n";
  t << "sampled storage bounds (seed " << sc.seed << "): "
    << (bounds.ok() ? "pass" : "fail") << " over " << bounds.samples << " samples\n";
  t << "sampled K-boundedness (advisory, seed " << sc.seed << "): "
    << (kb.ok() ? "pass" : "fail") << ", fitted gain " << format_double(kb.fitted_gain) << "\n";
  t << "verdict: " << to_string(o.certificate.verdict) << "\n";
  return t.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace detail

/// Runs the scenario and, when `out_dir` is non-empty, persists
/// trajectory.csv, ledger.csv, certificate.txt, summary.txt and columns.txt.
/// Partial logs of halted runs are persisted as well.
inline ScenarioOutcome run_scenario(const Scenario& sc, const std::string& out_dir) {
  const SystemModel model = make_model(sc.model, sc.overrides);
  const ControllerConfig cfg = sc.controller();
  ScenarioOutcome o;
  o.run = closed_loop(cfg, model, sc.x0, sc.steps);
  o.certificate = certify(o.run.log);
  const auto c = columns(o.run.log);
  o.metrics = convergence_metrics(c.x_norm2, c.V, sc.settle_eps);
  o.converged = o.run.completed && o.metrics.settle_time.has_value();

  const auto bounds = storage_bounds_check(cfg.kernel, model.state_set(), 1000, sc.seed);
  // The closed-loop policy at a sampled state: first input of a cold Problem 1 solve.
  StatePolicy policy = [&](const StateVec& x) -> InputVec {
    try {
      return solve_problem1(cfg, model, x).inputs.front();
    } catch (const Error&) {
      return InputVec::Zero(model.m());
    }
  };
  const auto kb = check_k_boundedness(model, policy, 8, sc.seed);
  o.summary = detail::write_summary(sc, o, bounds, kb);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ostringstream traj, ledger;
    write_trajectory_csv(o.run.log, traj);
    write_ledger_csv(o.run.log, ledger);
    detail::write_file(fs::path(out_dir) / "trajectory.csv", traj.str());
    detail::write_file(fs::path(out_dir) / "ledger.csv", ledger.str());
    detail::write_file(fs::path(out_dir) / "certificate.txt", to_text(o.certificate));
    detail::write_file(fs::path(out_dir) / "summary.txt", o.summary);
    detail::write_file(fs::path(out_dir) / "columns.txt",
                       column_manifest(o.run.log.meta.n, o.run.log.meta.m));
  }
  return o;
}

/// Re-certifies a persisted trajectory without re-solving.
inline CertificateReport replay_check(const std::string& trajectory_csv) {
  return certify(read_trajectory_csv(trajectory_csv));
}

enum class SweepParam { N, M };

inline SweepParam parse_sweep_param(const std::string& text) {
  if (text == "N") return SweepParam::N;
  if (text == "M") return SweepParam::M;
  throw Error(ErrorCode::InvalidInput, "sweep parameter must be N or M, got '" + text + "'");
}

struct SweepRow {
  int value = 0;
  bool completed = false;
  bool converged = false;
  std::optional<int> certified_M;
  std::optional<long> settle_time;
  std::string error;  // non-empty when the run failed to start or threw
};

/// Applies one sweep value. Sweeping N holds the horizon fixed (no
/// escalation); sweeping M holds the cycle length fixed (no adaptation).
inline Scenario sweep_variant(Scenario sc, SweepParam param, int value) {
  if (param == SweepParam::N) {
    sc.N = value;
    sc.N_max = value;
  } else {
    sc.M = value;
    sc.M_max = std::max(sc.M_max, value);
    sc.adapt = false;
  }
  return sc;
}

/// One run per value in [from, to], executed concurrently, reported in
/// increasing value order. Each run persists into <out_dir>/<param><value>
/// when `out_dir` is non-empty.
inline std::vector<SweepRow> sweep(const Scenario& base, SweepParam param, int from, int to,
                                   const std::string& out_dir = "") {
  std::vector<std::future<SweepRow>> jobs;
  for (int v = from; v <= to; ++v) {
    jobs.push_back(std::async(std::launch::async, [&base, param, v, &out_dir] {
      SweepRow row;
      row.value = v;
      try {
        const Scenario sc = sweep_variant(base, param, v);
        sc.validate();
        const std::string dir =
            out_dir.empty() ? ""
                            : (std::filesystem::path(out_dir) /
                               ((param == SweepParam::N ? "N" : "M") + std::to_string(v)))
                                  .string();
        const auto o = run_scenario(sc, dir);
        row.completed = o.run.completed;
        row.converged = o.converged;
        if (o.certificate.verdict == Verdict::Certified) row.certified_M = o.certificate.M;
        row.settle_time = o.metrics.settle_time;
        if (!o.run.completed) row.error = o.run.halt_reason;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      return row;
    }));
  }
  std::vector<SweepRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

inline std::string sweep_table(SweepParam param, const std::vector<SweepRow>& rows) {
  std::string t = std::string(param == SweepParam::N ? "N" : "M") +
                  ",completed,converged,certified_M,settle_time,error\n";
  for (const auto& r : rows) {
    t += std::to_string(r.value) + "," + (r.completed ? "yes" : "no") + "," +
         (r.converged ? "yes" : "no") + "," +
         (r.certified_M ? std::to_string(*r.certified_M) : "none") + "," +
         (r.settle_time ? std::to_string(*r.settle_time) : "never") + ",";
    std::string e = r.error;
    for (auto& ch : e) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    t += e + "\n";
  }
  return t;
}

}  // namespace cdf
