#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mlbn/error.hpp"
#include "mlbn/prior.hpp"

using namespace mlbn;

namespace {

struct Moments {
  double n = 0.0;
  double sum = 0.0;
  double sum2 = 0.0;
  void add(double v) {
    n += 1.0;
    sum += v;
    sum2 += v * v;
  }
  // Second moment about the known zero mean and its standard error.
  double var() const { return sum2 / n; }
  double var_se() const { return var() * std::sqrt(2.0 / n); }
};

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

double ks_critical(double n, double m, double significance) {
  return std::sqrt(-std::log(significance / 2.0) / 2.0) * std::sqrt((n + m) / (n * m));
}

double gaussian_log_pdf(double v, double var) { return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * v * v / var; }

}  // namespace

TEST_CASE("prior construction") {
  CHECK_THROWS_AS(TnnPrior(0.5, NetworkShape(2, 1, 1, 1)), ConfigError);
  const TnnPrior p(2.0, NetworkShape(2, 1, 1, 1));
  CHECK(p.weight_variance(2, 3) == doctest::Approx(1.0 / 36.0));
  CHECK(p.bias_variance(4) == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("marginal entry variances") {
  // Layer 0 of D=3, n=3, width 4 holds A_{2,3} and b_4; layer 1 is hidden to hidden.
  const TnnPrior prior(2.0, NetworkShape(3, 3, 1, 2));
  RngStream rng(1, 1);
  Moments a23;
  Moments b4;
  Moments a44;
  const int draws = 1000000;
  for (int s = 0; s < draws; ++s) {
    const ThetaLevel t = sample(prior, rng);
    a23.add(t.weight(0)(1, 2));
    b4.add(t.bias(1)(3));
    a44.add(t.weight(1)(3, 3));
  }
  CHECK(std::abs(a23.var() - 1.0 / 36.0) < 4.0 * a23.var_se());
  CHECK(std::abs(b4.var() - 1.0 / 16.0) < 4.0 * b4.var_se());
  CHECK(std::abs(a44.var() - 1.0 / 256.0) < 4.0 * a44.var_se());
}

TEST_CASE("sampling is deterministic per stream") {
  const TnnPrior prior(2.0, NetworkShape(3, 2, 2, 3));
  RngStream a(5, 6);
  RngStream b(5, 6);
  CHECK(sample(prior, a) == sample(prior, b));
}

TEST_CASE("extension keeps the coarse block and draws new entries from the prior") {
  const TnnPrior fine(2.0, NetworkShape(3, 2, 1, 2));
  const TnnPrior coarse_prior = fine.at_level(1);
  RngStream rng(3, 3);
  Moments corner;
  for (int s = 0; s < 100000; ++s) {
    const ThetaLevel c = sample(coarse_prior, rng);
    const ThetaLevel f = extend(fine, c, rng);
    REQUIRE(embed_check(c, f));
    REQUIRE(f.restrict_to(1) == c);
    corner.add(f.weight(1)(3, 3));
  }
  CHECK(std::abs(corner.var() - 1.0 / 256.0) < 4.0 * corner.var_se());

  const ThetaLevel wrong(NetworkShape(3, 2, 1, 0));
  CHECK_THROWS_AS(extend(fine, wrong, rng), ShapeError);
}

TEST_CASE("coupled marginals match direct fine draws") {
  const TnnPrior fine(2.0, NetworkShape(3, 2, 1, 2));
  RngStream rng(8, 0);
  RngStream direct_rng(8, 1);
  std::vector<double> shared_coupled;
  std::vector<double> shared_direct;
  std::vector<double> new_coupled;
  std::vector<double> new_direct;
  for (int s = 0; s < 10000; ++s) {
    const ThetaLevel c = sample(fine.at_level(1), rng);
    const ThetaLevel f = extend(fine, c, rng);
    const ThetaLevel d = sample(fine, direct_rng);
    shared_coupled.push_back(f.weight(1)(0, 1));
    shared_direct.push_back(d.weight(1)(0, 1));
    new_coupled.push_back(f.weight(1)(2, 0));
    new_direct.push_back(d.weight(1)(2, 0));
  }
  const double crit = ks_critical(10000, 10000, 1e-3);
  CHECK(ks_statistic(shared_coupled, shared_direct) < crit);
  CHECK(ks_statistic(new_coupled, new_direct) < crit);
}

TEST_CASE("log density") {
  SUBCASE("zero parameters") {
    const TnnPrior prior(1.7, NetworkShape(3, 2, 2, 2));
    const ThetaLevel zero(prior.shape());
    double expected = 0.0;
    for (int k = 0; k < 3; ++k) {
      for (int i = 1; i <= prior.shape().rows(k); ++i) {
        for (int j = 1; j <= prior.shape().cols(k); ++j) expected += -0.5 * std::log(2.0 * std::numbers::pi * prior.weight_variance(i, j));
        expected += -0.5 * std::log(2.0 * std::numbers::pi * prior.bias_variance(i));
      }
    }
    CHECK(log_density(prior, zero) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("factorizes over coarse block and increment") {
    const TnnPrior fine(2.0, NetworkShape(3, 3, 2, 3));
    RngStream rng(21, 0);
    const ThetaLevel c = sample(fine.at_level(2), rng);
    const ThetaLevel f = extend(fine, c, rng);
    // Independent sum over entries outside the leading block.
    double increment = 0.0;
    const NetworkShape cs = c.shape();
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < f.weight(k).rows(); ++i) {
        for (int j = 0; j < f.weight(k).cols(); ++j) {
          if (i < cs.rows(k) && j < cs.cols(k)) continue;
          increment += gaussian_log_pdf(f.weight(k)(i, j), fine.weight_variance(i + 1, j + 1));
        }
        if (i >= cs.rows(k)) increment += gaussian_log_pdf(f.bias(k)(i), fine.bias_variance(i + 1));
      }
    }
    const double diff = log_density(fine, f) - log_density(fine.at_level(2), c);
    CHECK(std::abs(diff - increment) < 1e-10);
    CHECK(std::abs(log_increment_density(fine, f) - increment) < 1e-10);
  }
  SUBCASE("scaling a width-1 network") {
    const TnnPrior prior(2.0, NetworkShape(2, 1, 1, 0));
    RngStream rng(2, 2);
    const ThetaLevel t = sample(prior, rng);
    ThetaLevel doubled = t;
    double quad = 0.0;
    for (int k = 0; k < 2; ++k) {
      doubled.weight(k) *= 2.0;
      doubled.bias(k) *= 2.0;
      quad += t.weight(k)(0, 0) * t.weight(k)(0, 0) / prior.weight_variance(1, 1);
      quad += t.bias(k)(0) * t.bias(k)(0) / prior.bias_variance(1);
    }
    CHECK(std::abs(log_density(prior, doubled) - log_density(prior, t) + 1.5 * quad) < 1e-10);
  }
  SUBCASE("shape mismatch") {
    const TnnPrior prior(2.0, NetworkShape(2, 1, 1, 1));
    CHECK_THROWS_AS(log_density(prior, ThetaLevel(NetworkShape(2, 1, 1, 2))), ShapeError);
  }
}

TEST_CASE("output second moment is stable in the width") {
  Vector x = Vector::Constant(2, 0.8);
  double m[2] = {0.0, 0.0};
  for (int w = 0; w < 2; ++w) {
    const TnnPrior prior(2.0, NetworkShape(3, 2, 1, 3 + w));
    RngStream rng(31, static_cast<std::uint64_t>(w));
    for (int s = 0; s < 100000; ++s) {
      const double f = forward(sample(prior, rng), Activation::kTanh, x)[0];
      m[w] += f * f;
    }
  }
  const double ratio = m[1] / m[0];
  CHECK(ratio > 0.8);
  CHECK(ratio < 1.25);
}

TEST_CASE("collapsed and explicit rate samplers agree") {
  Vector x(3);
  x << 2.3, 1.4, 2.0;
  for (auto act : {Activation::kTanh, Activation::kReLU}) {
    for (int depth : {2, 3}) {
      RateRequest req;
      req.alpha = 1.5;
      req.depth = depth;
      req.activation = act;
      req.level_min = 1;
      req.level_max = 4;
      req.samples_per_level = 20000;
      req.method = RateMethod::kExplicit;
      const auto ex = increment_second_moment(req, x, RngStream(4, 1));
      req.method = RateMethod::kCollapsed;
      const auto co = increment_second_moment(req, x, RngStream(4, 2));
      REQUIRE(ex.size() == 4);
      for (std::size_t i = 0; i < ex.size(); ++i) {
        CHECK(ex[i].level == co[i].level);
        const double se = std::hypot(ex[i].std_error, co[i].std_error);
        CHECK(std::abs(ex[i].estimate - co[i].estimate) < 4.0 * se);
      }
    }
  }
}

TEST_CASE("rate method names") {
  CHECK(parse_rate_method("collapsed") == RateMethod::kCollapsed);
  CHECK(to_string(RateMethod::kExplicit) == "explicit");
  CHECK_THROWS_AS(parse_rate_method("fast"), ConfigError);
}
