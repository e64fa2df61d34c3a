// Log-space numeric helpers shared across the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace reflect {

// Floor applied to log-probabilities so a single near-zero expert cannot
// contribute -inf to a product.
inline constexpr double kLogProbFloor = -60.0;

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Shift a log-prob vector so its exp-sum is exactly 1.
inline void normalize_log_probs(std::vector<double>& logp) {
  double z = log_sum_exp(logp);
  for (double& x : logp) x -= z;
}

inline double floored(double logp, double floor = kLogProbFloor) {
  return std::max(logp, floor);
}

}  // namespace reflect
