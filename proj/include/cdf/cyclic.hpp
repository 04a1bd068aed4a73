#pragma once

#include <span>
#include <string>

#include "cdf/core.hpp"

// Window arithmetic of the cyclically negative supply condition
//   sum_{i=k-M+1}^{k} s(i) <= -rho(l(k-M+1))
// over realized supplies s and kernel values l, indexed by time.

namespace cdf {

inline void require_window(std::span<const double> s, std::span<const double> l, long k, int M) {
  if (M < 1) throw Error(ErrorCode::Precondition, "cycle length M must be >= 1");
  if (k < M - 1) {
    throw Error(ErrorCode::InsufficientHistory,
                "window of length " + std::to_string(M) + " ending at k = " + std::to_string(k));
  }
  if (k >= static_cast<long>(s.size()) || k >= static_cast<long>(l.size())) {
    throw Error(ErrorCode::InsufficientHistory, "no record at k = " + std::to_string(k));
  }
}

/// sum_{i=k-M+1}^{k} s(i), accumulated in increasing time order.
inline double window_supply(std::span<const double> s, long k, int M) {
  double total = 0.0;
  for (long i = k - M + 1; i <= k; ++i) total += s[static_cast<size_t>(i)];
  return total;
}

/// -rho(l(k-M+1)) - sum of the window. Non-negative iff the condition holds.
inline double cyclic_margin(std::span<const double> s, std::span<const double> l, long k, int M,
                            const ComparisonFunction& rho) {
  require_window(s, l, k, M);
  const double bound = -rho(l[static_cast<size_t>(k - M + 1)]);
  return bound - window_supply(s, k, M);
}

inline bool cyclic_holds(std::span<const double> s, std::span<const double> l, long k, int M,
                         const ComparisonFunction& rho) {
  require_window(s, l, k, M);
  return window_supply(s, k, M) <= -rho(l[static_cast<size_t>(k - M + 1)]);
}

/// Accumulated supply budget Gamma(k, M) = -sum_{i=k-M+1}^{k-1} s(i) - rho(l(k-M+1)).
/// Needs supplies up to k-1 and k >= M. s(k) <= Gamma(k, M) is equivalent to
/// the window ending at k passing.
inline double accumulated_supply(std::span<const double> s, std::span<const double> l, long k,
                                 int M, const ComparisonFunction& rho) {
  if (M < 1) throw Error(ErrorCode::Precondition, "cycle length M must be >= 1");
  if (k < M) {
    throw Error(ErrorCode::InsufficientHistory,
                "Gamma(k, M) needs k >= M, got k = " + std::to_string(k));
  }
  if (k - 1 >= static_cast<long>(s.size()) || k - M + 1 >= static_cast<long>(l.size())) {
    throw Error(ErrorCode::InsufficientHistory, "ledger incomplete before k = " + std::to_string(k));
  }
  double past = 0.0;
  for (long i = k - M + 1; i <= k - 1; ++i) past += s[static_cast<size_t>(i)];
  return -past - rho(l[static_cast<size_t>(k - M + 1)]);
}

/// Which windows a certificate must witness. Windows are indexed by their
/// end time k and counted from the start of a segment (a stretch of constant
/// horizon N).
enum class WindowStart {
  AfterStartup,  // windows ending at k >= M, the domain of Gamma(k, M)
  FromOrigin,    // every window ending at k >= M - 1
};

inline const char* to_string(WindowStart w) {
  return w == WindowStart::AfterStartup ? "after_startup" : "from_origin";
}

inline WindowStart parse_window_start(const std::string& text) {
  if (text == "after_startup") return WindowStart::AfterStartup;
  if (text == "from_origin") return WindowStart::FromOrigin;
  throw Error(ErrorCode::InvalidInput, "unknown window start '" + text + "'");
}

/// Per-step flags from kernel_resolved; an empty span marks every step resolved.
using ResolvedFlags = std::span<const char>;

/// A window can be judged in double precision when its starting kernel value
/// is resolved.
inline bool window_resolvable(ResolvedFlags resolved, long k, int M) {
  return resolved.empty() || resolved[static_cast<size_t>(k - M + 1)] != 0;
}

/// Smallest window end time (relative to the segment start) that must pass.
inline long first_required_window_end(int M, WindowStart w) {
  return w == WindowStart::AfterStartup ? M : M - 1;
}

}  // namespace cdf
