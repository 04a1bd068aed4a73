#pragma once

#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdf/core.hpp"
#include "cdf/cyclic.hpp"
#include "cdf/storage.hpp"
#include "cdf/trajectory.hpp"

namespace cdf {

struct DissipationResult {
  bool ok = true;
  double worst_slack = 0.0;  // max_k V(k+1) - V(k) - s(k)
  std::optional<long> worst_k;
};

/// V(k+1) - V(k) <= s(k) + tol for every k. V has one more entry than s.
inline DissipationResult check_dissipation(std::span<const double> V, std::span<const double> s,
                                           double tol = kTolStat) {
  if (V.size() < 2) throw Error(ErrorCode::Precondition, "dissipation check needs >= 2 values");
  if (s.size() + 1 != V.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dissipation check needs |s| = |V| - 1");
  }
  DissipationResult r;
  for (size_t k = 0; k < s.size(); ++k) {
    const double slack = V[k + 1] - V[k] - s[k];
    if (!r.worst_k || slack > r.worst_slack) {
      r.worst_slack = slack;
      r.worst_k = static_cast<long>(k);
    }
  }
  r.ok = r.worst_slack <= tol;
  return r;
}

struct WindowResult {
  bool ok = true;
  long windows = 0;
  std::optional<long> first_failure;  // start index of the first failing window
  double worst_margin = std::numeric_limits<double>::infinity();
};

/// V(k+M) - V(k) <= -nu(||x(k)||) + slack for every window start k >= first.
inline WindowResult check_finite_step_clf(std::span<const double> V,
                                          std::span<const double> x_norm, int M,
                                          const ComparisonFunction& nu, double slack = kTolStat,
                                          long first = 0) {
  if (M < 1) throw Error(ErrorCode::Precondition, "window length M must be >= 1");
  if (V.size() != x_norm.size()) {
    throw Error(ErrorCode::DimensionMismatch, "V and state norms differ in length");
  }
  if (static_cast<long>(V.size()) <= M) {
    throw Error(ErrorCode::InsufficientHistory, "log shorter than M + 1");
  }
  WindowResult r;
  for (long k = std::max(0L, first); k + M < static_cast<long>(V.size()); ++k) {
    const double margin = -nu(x_norm[k]) + slack - (V[k + M] - V[k]);
    ++r.windows;
    r.worst_margin = std::min(r.worst_margin, margin);
    if (margin < 0.0 && !r.first_failure) r.first_failure = k;
  }
  r.ok = !r.first_failure;
  return r;
}

/// alpha_s = rho o alpha_1 with alpha_1(c) = lambda_min(Q) c^2.
inline ComparisonFunction decrease_rate(const KernelFunction& kernel,
                                        const ComparisonFunction& rho) {
  return ComparisonFunction::compose(rho, kernel.alpha1());
}

/// M-step decrease V(k+M) - V(k) <= -alpha_s(||x(k)||_2) + slack.
inline WindowResult check_m_step_decrease(std::span<const double> V,
                                          std::span<const double> x_norm2,
                                          const KernelFunction& kernel, int M,
                                          const ComparisonFunction& rho,
                                          double slack = kTolStat, long first = 0) {
  return check_finite_step_clf(V, x_norm2, M, decrease_rate(kernel, rho), slack, first);
}

struct CyclicReport {
  bool ok = true;
  std::vector<std::pair<long, double>> margins;  // (window end k, margin)
  std::optional<long> first_failure;
  long unresolved = 0;  // windows skipped below the kernel resolution floor
};

/// Margins of the cyclic supply windows ending at first_end..last_end.
/// Windows starting at an unresolved kernel value are counted but not judged.
inline CyclicReport check_cyclic_windows(std::span<const double> s,
                                         std::span<const double> l, int M,
                                         const ComparisonFunction& rho, long first_end,
                                         long last_end, ResolvedFlags resolved = {}) {
  CyclicReport r;
  for (long k = std::max(first_end, static_cast<long>(M - 1)); k <= last_end; ++k) {
    if (!window_resolvable(resolved, k, M)) {
      ++r.unresolved;
      continue;
    }
    const bool holds = cyclic_holds(s, l, k, M, rho);
    r.margins.emplace_back(k, cyclic_margin(s, l, k, M, rho));
    if (!holds && !r.first_failure) r.first_failure = k;
  }
  r.ok = !r.first_failure;
  return r;
}

/// All windows of a complete ledger.
inline CyclicReport check_cyclic_windows(std::span<const double> s,
                                         std::span<const double> l, int M,
                                         const ComparisonFunction& rho) {
  return check_cyclic_windows(s, l, M, rho, M - 1, static_cast<long>(s.size()) - 1);
}

/// Smallest M in [1, M_max] whose resolvable required windows within
/// [segment, last] all pass.
inline std::optional<int> smallest_certified_m(std::span<const double> s,
                                               std::span<const double> l,
                                               const ComparisonFunction& rho, long segment,
                                               long last, int M_max, WindowStart start,
                                               ResolvedFlags resolved = {}) {
  for (int M = 1; M <= M_max; ++M) {
    const long first = segment + first_required_window_end(M, start);
    if (first > last) return M;
    bool ok = true;
    for (long k = first; k <= last && ok; ++k) {
      ok = !window_resolvable(resolved, k, M) || cyclic_holds(s, l, k, M, rho);
    }
    if (ok) return M;
  }
  return std::nullopt;
}

struct ConsistencyVerdict {
  bool consistent = true;
  long windows = 0;
  std::optional<long> counterexample;  // start of the offending window
  std::string detail;
};

/// Checks both directions of the equivalence between a storage with a
/// cyclically negative supply and a finite-step control Lyapunov function,
/// window by window, on one log:
///  - dissipation on k..k+M-1 plus the cyclic window starting at k implies
///    the M-step decrease with nu = rho o alpha_1;
///  - the M-step decrease with nu implies the supply s'(k) = V(k+1) - V(k)
///    satisfies sum s' <= -nu(||x(k)||).
/// Both conclusions get the accumulated tolerances of their premises plus a
/// rounding allowance.
inline ConsistencyVerdict cyclic_clf_cross_check(std::span<const double> V,
                                                 std::span<const double> s,
                                                 std::span<const double> l,
                                                 std::span<const double> x_norm2,
                                                 const KernelFunction& kernel, int M,
                                                 const ComparisonFunction& rho,
                                                 double tol = kTolStat) {
  if (M < 1) throw Error(ErrorCode::Precondition, "window length M must be >= 1");
  if (s.size() + 1 != V.size() || l.size() != V.size() || x_norm2.size() != V.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cross-check columns differ in length");
  }
  const auto nu = decrease_rate(kernel, rho);
  const double eps = std::numeric_limits<double>::epsilon();
  ConsistencyVerdict out;
  for (long k = 0; k + M < static_cast<long>(V.size()); ++k) {
    ++out.windows;
    double scale = std::abs(V[k]) + std::abs(V[k + M]) + l[k];
    bool dissipative = true;
    double sum_s = 0.0;
    double sum_ds = 0.0;
    for (long i = k; i < k + M; ++i) {
      dissipative = dissipative && V[i + 1] - V[i] <= s[i] + tol;
      sum_s += s[i];
      sum_ds += V[i + 1] - V[i];
      scale += std::abs(s[i]) + std::abs(V[i]);
    }
    const double round = 16.0 * (M + 1) * eps * scale;
    const double decrease = V[k + M] - V[k];
    const double bound = -nu(x_norm2[k]);

    const bool cyclic = sum_s <= -rho(l[k]);
    if (dissipative && cyclic && !(decrease <= bound + M * tol + round)) {
      out.consistent = false;
      out.counterexample = k;
      out.detail = "supply window certifies but the M-step decrease fails";
      return out;
    }
    const bool fsclf = decrease <= bound + tol;
    if (fsclf && !(sum_ds <= bound + tol + round)) {
      out.consistent = false;
      out.counterexample = k;
      out.detail = "M-step decrease holds but the induced supply window fails";
      return out;
    }
  }
  return out;
}

struct ConvergenceMetrics {
  std::optional<long> settle_time;  // nullopt: never settles within the log
  double final_norm = 0.0;
  double monotone_v_fraction = 1.0;
};

inline ConvergenceMetrics convergence_metrics(std::span<const double> x_norm2,
                                              std::span<const double> V, double eps) {
  if (x_norm2.empty()) throw Error(ErrorCode::Precondition, "empty log");
  ConvergenceMetrics m;
  m.final_norm = x_norm2.back();
  long k = static_cast<long>(x_norm2.size());
  while (k > 0 && x_norm2[k - 1] <= eps) --k;
  if (k < static_cast<long>(x_norm2.size())) m.settle_time = k;
  if (V.size() >= 2) {
    long down = 0;
    for (size_t i = 0; i + 1 < V.size(); ++i) down += V[i + 1] <= V[i] ? 1 : 0;
    m.monotone_v_fraction = static_cast<double>(down) / static_cast<double>(V.size() - 1);
  }
  return m;
}

/// Per-row columns of a trajectory log.
struct LogColumns {
  std::vector<double> x_norm2;  // every row, terminal included
  std::vector<double> l;        // every row
  std::vector<char> resolved;   // every row, kernel_resolved
  std::vector<double> V;        // solved rows
  std::vector<double> s;        // solved rows
  std::vector<int> N;           // solved rows
  long solved = 0;              // rows with a plan, all leading the log
  bool complete = false;        // every step solved and the terminal row present
};

inline LogColumns columns(const TrajectoryLog& log) {
  LogColumns c;
  for (const auto& r : log.rows) {
    c.x_norm2.push_back(norm(r.x, NormOrder::Two));
    c.l.push_back(r.l);
    c.resolved.push_back(kernel_resolved(r.x, r.l) ? 1 : 0);
    if (r.V && r.s && static_cast<long>(c.V.size()) == c.solved) {
      c.V.push_back(*r.V);
      c.s.push_back(*r.s);
      c.N.push_back(r.N);
      ++c.solved;
    }
  }
  c.complete = c.solved == log.meta.steps &&
               static_cast<long>(log.rows.size()) == log.meta.steps + 1 &&
               !log.rows.back().u && !log.rows.back().V;
  return c;
}

enum class Verdict { Certified, Uncertified };

inline const char* to_string(Verdict v) {
  return v == Verdict::Certified ? "Certified" : "Uncertified";
}

struct CertificateReport {
  DissipationResult dissipation;
  bool dissipation_ok = true;
  int M = 1;
  int N = 2;
  long segment_start = 0;
  CyclicReport cyclic;
  bool cyclic_ok = true;
  std::optional<int> smallest_M;
  WindowResult m_step;
  bool m_step_decrease_ok = true;
  bool storage_bounds_ok = true;
  long storage_bound_violations = 0;
  long storage_bounds_unresolved = 0;
  bool k_bounded_ok = true;  // advisory
  double max_growth_ratio = 0.0;
  bool complete = true;
  Verdict verdict = Verdict::Certified;
  std::vector<std::string> reasons;
};

/// Re-derives every certificate check from the log alone.
inline CertificateReport certify(const TrajectoryLog& log) {
  if (log.rows.empty()) throw Error(ErrorCode::Precondition, "empty trajectory log");
  const auto c = columns(log);
  const KernelFunction kernel(log.meta.Q);
  const auto rho = ComparisonFunction::linear(log.meta.rho_gain);
  const double tol = log.meta.tol_stat;
  CertificateReport r;
  r.complete = c.complete;
  r.M = log.rows.back().M;
  r.N = log.rows.back().N;

  // Dissipation between consecutive solved rows planned with the same N.
  for (long k = 0; k + 1 < c.solved; ++k) {
    if (c.N[k] != c.N[k + 1]) continue;
    const double slack = c.V[k + 1] - c.V[k] - c.s[k];
    if (!r.dissipation.worst_k || slack > r.dissipation.worst_slack) {
      r.dissipation.worst_slack = slack;
      r.dissipation.worst_k = k;
    }
  }
  r.dissipation.ok = r.dissipation.worst_slack <= tol;
  r.dissipation_ok = r.dissipation.ok;

  // Cyclic windows and M-step decrease over the final constant-N segment.
  long seg = c.solved;
  while (seg > 0 && c.N[seg - 1] == r.N) --seg;
  r.segment_start = seg;
  const long last = c.solved - 1;
  if (c.solved > 0) {
    r.cyclic = check_cyclic_windows(c.s, std::span<const double>(c.l).first(c.solved), r.M,
                                    rho, seg + first_required_window_end(r.M, log.meta.window_start),
                                    last, c.resolved);
    r.smallest_M = smallest_certified_m(c.s, std::span<const double>(c.l).first(c.solved), rho,
                                        seg, last, log.meta.M_max, log.meta.window_start,
                                        c.resolved);
  }
  r.cyclic_ok = r.cyclic.ok;

  const long first_start = seg + first_required_window_end(r.M, log.meta.window_start) - (r.M - 1);
  if (c.solved - seg > r.M) {
    const std::span<const double> V(c.V);
    const std::span<const double> xn(c.x_norm2);
    r.m_step = check_m_step_decrease(V.subspan(seg), xn.subspan(seg, c.solved - seg), kernel,
                                     r.M, rho, tol, first_start - seg);
  }
  r.m_step_decrease_ok = r.m_step.ok;

  const double rel = 64.0 * std::numeric_limits<double>::epsilon();
  for (const auto& row : log.rows) {
    const double s2 = row.x.squaredNorm();
    if (!kernel_resolved(row.x, row.l) ||
        (s2 > 0.0 && kernel.lambda_min() * s2 < kKernelResolution)) {
      ++r.storage_bounds_unresolved;
      continue;
    }
    const bool consistent = row.l == kernel(row.x);
    const bool bounded = row.l >= kernel.lambda_min() * s2 * (1.0 - rel) &&
                         row.l <= kernel.lambda_max() * s2 * (1.0 + rel);
    if (!consistent || !bounded) ++r.storage_bound_violations;
  }
  r.storage_bounds_ok = r.storage_bound_violations == 0;

  for (size_t k = 0; k + 1 < c.x_norm2.size(); ++k) {
    if (c.x_norm2[k] > 0.0) {
      r.max_growth_ratio = std::max(r.max_growth_ratio, c.x_norm2[k + 1] / c.x_norm2[k]);
    } else if (c.x_norm2[k + 1] > 0.0) {
      r.k_bounded_ok = false;
    }
  }

  if (!r.complete) r.reasons.push_back("run did not complete");
  if (!r.dissipation_ok) r.reasons.push_back("dissipation inequality violated");
  if (!r.cyclic_ok) r.reasons.push_back("cyclic supply condition fails at M");
  if (!r.m_step_decrease_ok) r.reasons.push_back("M-step decrease violated");
  if (!r.storage_bounds_ok) r.reasons.push_back("storage bounds violated");
  r.verdict = r.reasons.empty() ? Verdict::Certified : Verdict::Uncertified;
  return r;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Deterministic text rendering; identical reports render identically.
inline std::string to_text(const CertificateReport& r) {
  using detail::fmt17;
  std::string t;
  auto line = [&t](const std::string& key, const std::string& value) {
    t += key + ": " + value + "\n";
  };
  auto flag = [](bool b) { return std::string(b ? "pass" : "fail"); };
  auto opt_long = [](const std::optional<long>& v) {
    return v ? std::to_string(*v) : std::string("none");
  };
  line("verdict", to_string(r.verdict));
  line("complete", r.complete ? "yes" : "no");
  line("horizon N", std::to_string(r.N));
  line("cycle M", std::to_string(r.M));
  line("segment start", std::to_string(r.segment_start));
  line("dissipation", flag(r.dissipation_ok));
  line("dissipation worst slack", fmt17(r.dissipation.worst_slack));
  line("dissipation worst k", opt_long(r.dissipation.worst_k));
  line("cyclic", flag(r.cyclic_ok));
  line("cyclic windows", std::to_string(r.cyclic.margins.size()));
  line("cyclic first failure", opt_long(r.cyclic.first_failure));
  line("cyclic windows below resolution", std::to_string(r.cyclic.unresolved));
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& [k, m] : r.cyclic.margins) worst = std::min(worst, m);
  line("cyclic worst margin", r.cyclic.margins.empty() ? "none" : fmt17(worst));
  line("smallest certified M", r.smallest_M ? std::to_string(*r.smallest_M) : "none");
  line("m-step decrease", flag(r.m_step_decrease_ok));
  line("m-step windows", std::to_string(r.m_step.windows));
  line("m-step first failure", opt_long(r.m_step.first_failure));
  line("storage bounds", flag(r.storage_bounds_ok));
  line("storage bound violations", std::to_string(r.storage_bound_violations));
  line("storage rows below resolution", std::to_string(r.storage_bounds_unresolved));
  line("k-bounded (advisory)", flag(r.k_bounded_ok));
  line("max growth ratio", fmt17(r.max_growth_ratio));
  for (const auto& reason : r.reasons) line("reason", reason);
  return t;
}

}  // namespace cdf
