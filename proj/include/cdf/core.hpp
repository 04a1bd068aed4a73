#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cdf/error.hpp"

namespace cdf {

using StateVec = Eigen::VectorXd;
using InputVec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default absolute feasibility tolerance for set membership.
inline constexpr double kTolFeas = 1e-8;
/// Default slack for certified inequalities and solver stationarity.
inline constexpr double kTolStat = 1e-8;

/// Smallest kernel value with full relative precision. Below it, products
/// and differences of kernel values fall into gradual underflow and their
/// rounding error is no longer proportional to their size.
inline constexpr double kKernelResolution =
    std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();

/// Whether a kernel value l(x) is exact or carries full relative precision:
/// x is exactly zero, or l(x) is at or above the resolution floor.
inline bool kernel_resolved(const Eigen::Ref<const Eigen::VectorXd>& x, double l) {
  return l >= kKernelResolution || (x.array() == 0.0).all();
}

enum class NormOrder { One, Two, Inf };

inline std::string to_string(NormOrder order) {
  switch (order) {
    case NormOrder::One: return "1";
    case NormOrder::Two: return "2";
    case NormOrder::Inf: return "inf";
  }
  return "?";
}

inline NormOrder parse_norm_order(const std::string& text) {
  if (text == "1") return NormOrder::One;
  if (text == "2") return NormOrder::Two;
  if (text == "inf" || text == "Inf" || text == "INF") return NormOrder::Inf;
  throw Error(ErrorCode::InvalidInput, "unknown norm order '" + text + "'");
}

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.allFinite();
}

inline void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v,
                           const char* what) {
  if (!v.allFinite()) {
    throw Error(ErrorCode::InvalidInput,
                std::string(what) + " has a non-finite entry");
  }
}

inline double norm(const Eigen::Ref<const Eigen::VectorXd>& v,
                   NormOrder order) {
  require_finite(v, "norm argument");
  switch (order) {
    case NormOrder::One: return v.lpNorm<1>();
    case NormOrder::Two: return v.stableNorm();
    case NormOrder::Inf: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

/// Closed norm ball {v : ||v|| <= radius} centred at the origin.
class NormBallSet {
 public:
  NormBallSet(double radius, NormOrder order, int dimension,
              double tol_feas = kTolFeas)
      : radius_(radius), order_(order), dim_(dimension), tol_feas_(tol_feas) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw Error(ErrorCode::InvalidInput, "ball radius must be positive");
    }
    if (dimension <= 0) {
      throw Error(ErrorCode::InvalidInput, "ball dimension must be positive");
    }
    if (!(tol_feas >= 0.0)) {
      throw Error(ErrorCode::InvalidInput, "feasibility tolerance must be >= 0");
    }
  }

  double radius() const { return radius_; }
  NormOrder order() const { return order_; }
  int dimension() const { return dim_; }
  double tol_feas() const { return tol_feas_; }

  NormBallSet with_tolerance(double tol) const {
    return NormBallSet(radius_, order_, dim_, tol);
  }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    check_dim(v);
    return norm(v, order_) <= radius_ + tol_feas_;
  }

  /// Amount by which ||v|| exceeds the radius (zero for members).
  double violation(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    check_dim(v);
    return std::max(0.0, norm(v, order_) - radius_);
  }

  /// Euclidean projection onto the ball. Supported for the 2- and inf-norm.
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    check_dim(v);
    switch (order_) {
      case NormOrder::Inf:
        return v.cwiseMax(-radius_).cwiseMin(radius_);
      case NormOrder::Two: {
        const double n = norm(v, NormOrder::Two);
        if (n <= radius_) return v;
        Eigen::VectorXd p = v * (radius_ / n);
        // Rounding in the rescale can leave ||p|| a few ulps above radius.
        while (norm(p, NormOrder::Two) > radius_) {
          p *= (1.0 - std::numeric_limits<double>::epsilon());
        }
        return p;
      }
      case NormOrder::One:
        break;
    }
    throw Error(ErrorCode::Unsupported, "projection onto a 1-norm ball");
  }

 private:
  void check_dim(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "vector of size " + std::to_string(v.size()) +
                      " against set of dimension " + std::to_string(dim_));
    }
  }

  double radius_;
  NormOrder order_;
  int dim_;
  double tol_feas_;
};

/// Comparison function from a small closed family: c * s^p power laws and
/// their compositions. Every member is class-K-infinity by construction.
class ComparisonFunction {
 public:
  struct PowerLaw {
    double coefficient;
    double exponent;
  };

  static ComparisonFunction power_law(double coefficient, double exponent) {
    return ComparisonFunction({PowerLaw{coefficient, exponent}});
  }

  /// rho(s) = gamma * s.
  static ComparisonFunction linear(double gamma) { return power_law(gamma, 1.0); }

  static ComparisonFunction identity() { return linear(1.0); }

  /// (outer o inner)(s) = outer(inner(s)).
  static ComparisonFunction compose(const ComparisonFunction& outer,
                                    const ComparisonFunction& inner) {
    std::vector<PowerLaw> chain = inner.chain_;
    chain.insert(chain.end(), outer.chain_.begin(), outer.chain_.end());
    return ComparisonFunction(std::move(chain));
  }

  double operator()(double s) const {
    if (!(s >= 0.0)) {
      throw Error(ErrorCode::InvalidInput, "comparison function argument must be >= 0");
    }
    double v = s;
    for (const auto& p : chain_) {
      v = p.exponent == 1.0 ? p.coefficient * v : p.coefficient * std::pow(v, p.exponent);
    }
    return v;
  }

  bool is_linear() const {
    return std::all_of(chain_.begin(), chain_.end(),
                       [](const PowerLaw& p) { return p.exponent == 1.0; });
  }

  /// Slope of the function when it is linear.
  double linear_gain() const {
    if (!is_linear()) {
      throw Error(ErrorCode::Unsupported, "gain of a nonlinear comparison function");
    }
    double g = 1.0;
    for (const auto& p : chain_) g *= p.coefficient;
    return g;
  }

  /// True when value(s) < s for every s > 0. Decidable exactly for linear
  /// members; other members are never certified.
  bool is_below_identity() const { return is_linear() && linear_gain() < 1.0; }

  const std::vector<PowerLaw>& chain() const { return chain_; }

 private:
  explicit ComparisonFunction(std::vector<PowerLaw> chain) : chain_(std::move(chain)) {
    for (const auto& p : chain_) {
      if (!(p.coefficient > 0.0) || !(p.exponent > 0.0) ||
          !std::isfinite(p.coefficient) || !std::isfinite(p.exponent)) {
        throw Error(ErrorCode::InvalidInput,
                    "power-law parameters must be positive and finite");
      }
    }
  }

  std::vector<PowerLaw> chain_;
};

}  // namespace cdf
