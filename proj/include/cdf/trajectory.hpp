#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdf/core.hpp"
#include "cdf/cyclic.hpp"
#include "cdf/nlp.hpp"

namespace cdf {

enum class Scheme { Problem1With2, Problem3 };

inline const char* to_string(Scheme s) {
  return s == Scheme::Problem1With2 ? "problem1_with_2" : "problem3";
}

inline Scheme parse_scheme(const std::string& text) {
  if (text == "problem1_with_2") return Scheme::Problem1With2;
  if (text == "problem3") return Scheme::Problem3;
  throw Error(ErrorCode::InvalidInput, "unknown scheme '" + text + "'");
}

/// One closed-loop step. The terminal row carries only the state, its kernel
/// value and the final (M, N).
struct TrajectoryRow {
  long k = 0;
  StateVec x;
  std::optional<InputVec> u;
  double l = 0.0;
  std::optional<double> V;
  std::optional<double> s;
  std::optional<double> gamma;  // accumulated supply budget, when defined
  int M = 1;
  int N = 2;
  std::optional<SolveStatus> status;
  std::optional<bool> cyclic;  // window ending at k, when required
};

/// Everything a replay needs besides the rows.
struct LogMetadata {
  std::string model;
  int n = 0;  // state dimension
  int m = 0;  // input dimension
  long steps = 0;  // requested closed-loop steps
  Scheme scheme = Scheme::Problem1With2;
  double rho_gain = 0.99;
  Matrix Q;
  int M_max = 10;
  int N_max = 12;
  double tol_stat = kTolStat;
  double tol_feas = kTolFeas;
  WindowStart window_start = WindowStart::AfterStartup;
};

struct TrajectoryLog {
  LogMetadata meta;
  std::vector<TrajectoryRow> rows;
};

}  // namespace cdf
