#pragma once

// Synthetic storage/supply logs for the equivalence cross-check. Each log is
// built around one of four shapes so both directions of the check see
// premises that hold, fail, and sit exactly on their bounds.

#include <cmath>
#include <random>
#include <vector>

#include "cdf/analysis.hpp"

namespace cdf::fuzz {

struct SyntheticLog {
  std::vector<double> V, s, l, x_norm2;
  KernelFunction kernel{Matrix::Identity(2, 2)};
  int M = 1;
  int shape = 0;
};

inline SyntheticLog synthetic_log(std::mt19937_64& rng, const ComparisonFunction& rho) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticLog g;
  g.shape = std::uniform_int_distribution<int>(0, 3)(rng);
  g.M = std::uniform_int_distribution<int>(1, 6)(rng);
  const int n = std::uniform_int_distribution<int>(1, 4)(rng);
  const int len = std::uniform_int_distribution<int>(g.M + 1, 40)(rng);
  const double scale = std::pow(10.0, -250.0 * unit(rng) * unit(rng) + 3.0 * unit(rng));

  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q(i) = 0.05 + 10.0 * unit(rng);
  g.kernel = KernelFunction::diagonal(q);

  // Decaying state trajectory.
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = gauss(rng) * std::sqrt(scale);
  const double decay = 0.3 + 0.69 * unit(rng);
  for (int k = 0; k < len; ++k) {
    g.x_norm2.push_back(norm(x, NormOrder::Two));
    g.l.push_back(g.kernel(x));
    for (int i = 0; i < n; ++i) x(i) = decay * x(i) + 0.05 * gauss(rng) * std::abs(x(i));
  }
  const auto nu = decrease_rate(g.kernel, rho);

  g.V.assign(len, 0.0);
  g.s.assign(len - 1, 0.0);
  switch (g.shape) {
    case 0:  // unrelated values of mixed sign
      for (int k = 0; k < len; ++k) g.V[k] = scale * (unit(rng) * 5.0);
      for (int k = 0; k + 1 < len; ++k) g.s[k] = scale * (unit(rng) * 4.0 - 3.0);
      break;
    case 1: {  // dissipative with a supply proportional to -l
      const double c = 0.5 + unit(rng);
      g.V[0] = 3.0 * g.l[0] + scale * unit(rng);
      for (int k = 0; k + 1 < len; ++k) {
        g.s[k] = -c * g.l[k];
        const double gap = unit(rng) < 0.2 ? 0.0 : unit(rng) * g.l[k];
        g.V[k + 1] = g.V[k] + g.s[k] - gap;
      }
      break;
    }
    case 2: {  // M-step decrease built in, supply is the storage increment
      for (int k = 0; k < len; ++k) {
        if (k < g.M) {
          g.V[k] = 10.0 * g.l[0] + scale * unit(rng);
        } else {
          const double slack = unit(rng) < 0.3 ? 0.0 : unit(rng) * g.l[k - g.M];
          g.V[k] = g.V[k - g.M] - nu(g.x_norm2[k - g.M]) - slack;
        }
      }
      for (int k = 0; k + 1 < len; ++k) g.s[k] = g.V[k + 1] - g.V[k];
      break;
    }
    case 3: {  // windows exactly on the cyclic bound
      for (int k = 0; k + 1 < len; ++k) {
        g.s[k] = k % g.M == g.M - 1 ? -rho(g.l[k - g.M + 1]) : 0.0;
      }
      g.V[0] = scale;
      for (int k = 0; k + 1 < len; ++k) g.V[k + 1] = g.V[k] + g.s[k];
      break;
    }
  }
  return g;
}

}  // namespace cdf::fuzz
