#pragma once

#include <vector>

namespace mlbn {

/// Gauss-Hermite rule for the weight exp(-s^2) on the real line.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached n-point rule (nodes by Newton iteration on the orthonormal
/// Hermite recurrence). Thread-safe.
const GaussHermiteRule& gauss_hermite(int n);

double normal_log_pdf(double z);
double normal_cdf(double z);
/// log Phi(z), accurate far into the lower tail.
double normal_log_cdf(double z);
/// phi(z) / Phi(z).
double inverse_mills(double z);

}  // namespace mlbn
