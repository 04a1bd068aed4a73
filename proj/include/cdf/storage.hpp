#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cdf/core.hpp"
#include "cdf/model.hpp"

namespace cdf {

/// Positive definite quadratic kernel l(x) = x' Q x with its class-K-infinity
/// bounds lambda_min(Q) s^2 <= l(x) <= lambda_max(Q) s^2 for s = ||x||_2.
class KernelFunction {
 public:
  explicit KernelFunction(Matrix q) : q_(std::move(q)) {
    if (q_.rows() == 0 || q_.rows() != q_.cols()) {
      throw Error(ErrorCode::InvalidInput, "kernel weight must be a non-empty square matrix");
    }
    if (!q_.allFinite()) throw Error(ErrorCode::InvalidInput, "kernel weight is not finite");
    if (!(q_.array() == q_.transpose().array()).all()) {
      throw Error(ErrorCode::InvalidInput, "kernel weight is not symmetric");
    }
    Eigen::LLT<Matrix> llt(q_);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidInput, "kernel weight is not positive definite");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q_, Eigen::EigenvaluesOnly);
    lambda_min_ = eig.eigenvalues().minCoeff();
    lambda_max_ = eig.eigenvalues().maxCoeff();
    if (!(lambda_min_ > 0.0)) {
      throw Error(ErrorCode::InvalidInput, "kernel weight is not positive definite");
    }
  }

  static KernelFunction diagonal(const Eigen::VectorXd& d) {
    return KernelFunction(Matrix(d.asDiagonal()));
  }

  int dimension() const { return static_cast<int>(q_.rows()); }
  const Matrix& weight() const { return q_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }

  /// alpha_1(s) = lambda_min(Q) s^2.
  ComparisonFunction alpha1() const { return ComparisonFunction::power_law(lambda_min_, 2.0); }
  /// alpha_2(s) = lambda_max(Q) s^2.
  ComparisonFunction alpha2() const { return ComparisonFunction::power_law(lambda_max_, 2.0); }

  double operator()(const StateVec& x) const {
    check(x);
    return x.dot(q_ * x);
  }

  /// dl/dx = 2 Q x.
  StateVec gradient(const StateVec& x) const {
    check(x);
    return 2.0 * (q_ * x);
  }

 private:
  void check(const StateVec& x) const {
    if (x.size() != q_.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "kernel of dimension " +
                                                    std::to_string(q_.rows()) + " applied to size " +
                                                    std::to_string(x.size()));
    }
    require_finite(x, "kernel argument");
  }

  Matrix q_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

inline double kernel_eval(const KernelFunction& l, const StateVec& x) { return l(x); }

/// V = sum_{i=0}^{N-1} l(x(i|k)).
struct StorageValue {
  double value = 0.0;
  int horizon = 0;
  std::vector<double> per_stage;
};

inline StorageValue storage_eval(const KernelFunction& l, const std::vector<StateVec>& states,
                                 int horizon) {
  if (horizon < 2) throw Error(ErrorCode::Precondition, "storage horizon must be >= 2");
  if (static_cast<int>(states.size()) != horizon) {
    throw Error(ErrorCode::Precondition, "storage needs exactly N = " + std::to_string(horizon) +
                                             " states, got " + std::to_string(states.size()));
  }
  StorageValue v;
  v.horizon = horizon;
  v.per_stage.reserve(states.size());
  for (const auto& x : states) {
    v.per_stage.push_back(l(x));
    v.value += v.per_stage.back();
  }
  return v;
}

/// s(x(k)) = l(x_tail) - l(x(k)). Any sign is meaningful.
inline double supply_eval(const KernelFunction& l, const StateVec& x_k, const StateVec& x_tail) {
  return l(x_tail) - l(x_k);
}

struct StorageBoundsReport {
  double alpha1_coefficient = 0.0;
  double alpha2_coefficient = 0.0;
  int samples = 0;
  std::vector<StateVec> violations;
  bool ok() const { return violations.empty(); }
};

/// Cross-checks alpha_1(||x||_2) <= l(x) <= alpha_2(||x||_2) on samples drawn
/// uniformly from the box/ball `domain`. The coefficients are the exact
/// eigenvalue bounds; a relative slack of a few ulps absorbs rounding.
inline StorageBoundsReport storage_bounds_check(const KernelFunction& l, const NormBallSet& domain,
                                                int samples, std::uint64_t seed = 0) {
  if (samples < 1) throw Error(ErrorCode::Precondition, "bounds check needs samples >= 1");
  if (domain.dimension() != l.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "sampling domain does not match kernel");
  }
  StorageBoundsReport report{l.lambda_min(), l.lambda_max(), samples, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.0, 1.0);
  const double rel = 64.0 * std::numeric_limits<double>::epsilon();
  for (int i = 0; i < samples; ++i) {
    const StateVec x =
        sample_on_shell(l.dimension(), domain.radius() * scale(rng), domain.order(), rng);
    const double s2 = x.squaredNorm();
    const double v = l(x);
    const double lo = l.lambda_min() * s2;
    const double hi = l.lambda_max() * s2;
    if (v < lo * (1.0 - rel) || v > hi * (1.0 + rel)) report.violations.push_back(x);
  }
  return report;
}

}  // namespace cdf
