#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdf/analysis.hpp"
#include "cdf/controller.hpp"
#include "cdf/trajectory.hpp"

namespace cdf {

/// 17 significant digits, enough for every double to read back exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_matrix(const Matrix& q) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    out += i ? ",[" : "[";
    for (Eigen::Index j = 0; j < q.cols(); ++j) out += (j ? "," : "") + format_double(q(i, j));
    out += "]";
  }
  return out + "]";
}

/// Column names of a trajectory log with n states and m inputs.
inline std::vector<std::string> trajectory_columns(int n, int m) {
  std::vector<std::string> cols{"k"};
  for (int i = 1; i <= n; ++i) cols.push_back("x" + std::to_string(i));
  for (int i = 1; i <= m; ++i) cols.push_back("u" + std::to_string(i));
  for (const char* c : {"l", "V", "s", "gamma", "M", "N", "status", "cyclic"}) cols.emplace_back(c);
  return cols;
}

inline void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
  const auto& m = log.meta;
  out << "# cdf trajectory log v1\n";
  out << "# model=" << m.model << "\n";
  out << "# n=" << m.n << "\n";
  out << "# m=" << m.m << "\n";
  out << "# steps=" << m.steps << "\n";
  out << "# scheme=" << to_string(m.scheme) << "\n";
  out << "# rho=" << format_double(m.rho_gain) << "\n";
  out << "# Q=" << format_matrix(m.Q) << "\n";
  out << "# M_max=" << m.M_max << "\n";
  out << "# N_max=" << m.N_max << "\n";
  out << "# tol_stat=" << format_double(m.tol_stat) << "\n";
  out << "# tol_feas=" << format_double(m.tol_feas) << "\n";
  out << "# window_start=" << to_string(m.window_start) << "\n";
  const auto cols = trajectory_columns(m.n, m.m);
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : log.rows) {
    out << r.k;
    for (Eigen::Index i = 0; i < r.x.size(); ++i) out << "," << format_double(r.x(i));
    for (int i = 0; i < m.m; ++i) out << "," << (r.u ? format_double((*r.u)(i)) : "");
    out << "," << format_double(r.l) << "," << opt(r.V) << "," << opt(r.s) << "," << opt(r.gamma);
    out << "," << r.M << "," << r.N << "," << (r.status ? to_string(*r.status) : "");
    out << "," << (r.cyclic ? (*r.cyclic ? "pass" : "fail") : "") << "\n";
  }
}

namespace detail {

[[noreturn]] inline void parse_fail(long line, const std::string& column, const std::string& what) {
  throw Error(ErrorCode::Parse,
              "line " + std::to_string(line) + ", column '" + column + "': " + what);
}

inline double parse_double(const std::string& text, long line, const std::string& column) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_fail(line, column, "not a number: '" + text + "'");
  return v;
}

inline long parse_long(const std::string& text, long line, const std::string& column) {
  long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_fail(line, column, "not an integer: '" + text + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline Matrix parse_matrix(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw Error(ErrorCode::Parse, what + ": expected a list");
  if (j.front().is_number()) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw Error(ErrorCode::Parse, what + ": expected numbers");
      d(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return d.asDiagonal();
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix q(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) {
      throw Error(ErrorCode::Parse, what + ": expected a square matrix");
    }
    for (Eigen::Index c = 0; c < rows; ++c) {
      if (!row[static_cast<size_t>(c)].is_number()) {
        throw Error(ErrorCode::Parse, what + ": expected numbers");
      }
      q(i, c) = row[static_cast<size_t>(c)].get<double>();
    }
  }
  return q;
}

}  // namespace detail

/// Reads a log written by write_trajectory_csv. Schema violations raise a
/// parse error naming the line and column.
inline TrajectoryLog read_trajectory_csv(std::istream& in) {
  using detail::parse_fail;
  TrajectoryLog log;
  std::map<std::string, std::string> meta;
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    header = detail::split(line, ',');
    break;
  }
  if (header.empty()) throw Error(ErrorCode::Parse, "empty trajectory file");

  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw Error(ErrorCode::Parse, "missing metadata '" + key + "'");
    return it->second;
  };
  auto& m = log.meta;
  try {
    m.model = need("model");
    m.n = static_cast<int>(detail::parse_long(need("n"), 0, "n"));
    m.m = static_cast<int>(detail::parse_long(need("m"), 0, "m"));
    m.steps = detail::parse_long(need("steps"), 0, "steps");
    m.scheme = parse_scheme(need("scheme"));
    m.rho_gain = detail::parse_double(need("rho"), 0, "rho");
    m.Q = detail::parse_matrix(nlohmann::json::parse(need("Q")), "Q");
    m.M_max = static_cast<int>(detail::parse_long(need("M_max"), 0, "M_max"));
    m.N_max = static_cast<int>(detail::parse_long(need("N_max"), 0, "N_max"));
    m.tol_stat = detail::parse_double(need("tol_stat"), 0, "tol_stat");
    m.tol_feas = detail::parse_double(need("tol_feas"), 0, "tol_feas");
    m.window_start = parse_window_start(need("window_start"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("metadata Q: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Parse) throw;
    throw Error(ErrorCode::Parse, std::string("metadata: ") + e.what());
  }

  const auto cols = trajectory_columns(m.n, m.m);
  if (header != cols) parse_fail(line_no, "header", "columns do not match the log schema");

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != cols.size()) {
      parse_fail(line_no, "row", "expected " + std::to_string(cols.size()) + " fields, got " +
                                     std::to_string(cells.size()));
    }
    size_t c = 0;
    auto num = [&](size_t i) { return detail::parse_double(cells[i], line_no, cols[i]); };
    auto opt = [&](size_t i) -> std::optional<double> {
      if (cells[i].empty()) return std::nullopt;
      return num(i);
    };
    TrajectoryRow r;
    r.k = detail::parse_long(cells[c], line_no, cols[c]);
    ++c;
    r.x.resize(m.n);
    for (int i = 0; i < m.n; ++i, ++c) r.x(i) = num(c);
    bool any_u = false, all_u = true;
    InputVec u(m.m);
    for (int i = 0; i < m.m; ++i, ++c) {
      if (cells[c].empty()) {
        all_u = false;
      } else {
        any_u = true;
        u(i) = num(c);
      }
    }
    if (any_u && !all_u) parse_fail(line_no, "u", "partially missing input");
    if (any_u) r.u = u;
    r.l = num(c++);
    r.V = opt(c++);
    r.s = opt(c++);
    r.gamma = opt(c++);
    r.M = static_cast<int>(detail::parse_long(cells[c], line_no, cols[c]));
    ++c;
    r.N = static_cast<int>(detail::parse_long(cells[c], line_no, cols[c]));
    ++c;
    if (!cells[c].empty()) {
      try {
        r.status = parse_solve_status(cells[c]);
      } catch (const Error&) {
        parse_fail(line_no, cols[c], "unknown status '" + cells[c] + "'");
      }
    }
    ++c;
    if (cells[c] == "pass") {
      r.cyclic = true;
    } else if (cells[c] == "fail") {
      r.cyclic = false;
    } else if (!cells[c].empty()) {
      parse_fail(line_no, cols[c], "expected pass, fail or empty");
    }
    if (r.k != static_cast<long>(log.rows.size())) parse_fail(line_no, "k", "rows not contiguous");
    log.rows.push_back(std::move(r));
  }
  if (log.rows.empty()) throw Error(ErrorCode::Parse, "trajectory file has no rows");
  return log;
}

inline TrajectoryLog read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Parse, "cannot open '" + path + "'");
  return read_trajectory_csv(in);
}

/// Ledger view of a log: k, s, Gamma, M, and the margin of the window ending
/// at k under that row's M (empty when the window is not required).
inline void write_ledger_csv(const TrajectoryLog& log, std::ostream& out) {
  const auto c = columns(log);
  const auto rho = ComparisonFunction::linear(log.meta.rho_gain);
  out << "k,s,gamma,M,margin\n";
  for (long k = 0; k < c.solved; ++k) {
    const auto& r = log.rows[static_cast<size_t>(k)];
    out << k << "," << format_double(*r.s) << "," << (r.gamma ? format_double(*r.gamma) : "")
        << "," << r.M << ",";
    if (r.cyclic) {
      out << format_double(cyclic_margin(c.s, std::span<const double>(c.l).first(c.solved), k,
                                         r.M, rho));
    }
    out << "\n";
  }
}

/// Column manifest for plotting tools.
inline std::string column_manifest(int n, int m) {
  std::string t = "# trajectory.csv\n";
  t += "k: time step\n";
  for (int i = 1; i <= n; ++i) t += "x" + std::to_string(i) + ": state component at k\n";
  for (int i = 1; i <= m; ++i) {
    t += "u" + std::to_string(i) + ": applied input at k (empty on the terminal row)\n";
  }
  t += "l: kernel value l(x(k))\n";
  t += "V: optimal storage value V*(x(k))\n";
  t += "s: realized supply s(x(k))\n";
  t += "gamma: accumulated supply budget Gamma(k, M), when defined\n";
  t += "M: cycle length in force at k (terminal row: final value)\n";
  t += "N: prediction horizon in force at k (terminal row: final value)\n";
  t += "status: solver status of the plan at k\n";
  t += "cyclic: pass/fail of the supply window ending at k, when required\n";
  t += "\n# ledger.csv\n";
  t += "k, s, gamma, M: as above\n";
  t += "margin: -rho(l(x(k-M+1))) - sum of s over the window; >= 0 passes\n";
  return t;
}

}  // namespace cdf
