#include "mlbn/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "mlbn/error.hpp"

namespace mlbn {

namespace {

GaussHermiteRule build_rule(int n) {
  constexpr double kEps = 1e-15;
  constexpr int kMaxIter = 200;
  const double pim4 = std::pow(std::numbers::pi, -0.25);

  GaussHermiteRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  auto& x = rule.nodes;
  auto& w = rule.weights;

  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    // Initial guesses for the largest roots, then extrapolation.
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= kEps * std::max(1.0, std::abs(z))) break;
    }
    if (iter == kMaxIter) throw DomainError("Gauss-Hermite root iteration failed for n = " + std::to_string(n));
    x[static_cast<std::size_t>(i)] = z;
    x[static_cast<std::size_t>(n - 1 - i)] = -z;
    w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
    w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1 || n > 512) throw DomainError("Gauss-Hermite order must lie in [1, 512]");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(n));
  return *slot;
}

double normal_log_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_log_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -5.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // Mills ratio R(x) = Phi(-x)/phi(x) as a continued fraction,
  // x / (x^2 + 1 - 1*2 / (x^2 + 5 - 3*4 / (x^2 + 9 - ...))), evaluated
  // backwards; for x >= 5 forty terms are well past double precision.
  const double x = -z;
  const double x2 = x * x;
  double tail = 0.0;
  for (int k = 40; k >= 1; --k) {
    const double a = (2.0 * k - 1.0) * (2.0 * k);
    tail = a / (x2 + 4.0 * k + 1.0 - tail);
  }
  const double mills = x / (x2 + 1.0 - tail);
  return normal_log_pdf(z) + std::log(mills);
}

double inverse_mills(double z) { return std::exp(normal_log_pdf(z) - normal_log_cdf(z)); }

}  // namespace mlbn
