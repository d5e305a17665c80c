#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mlbn/error.hpp"
#include "mlbn/quadrature.hpp"

using namespace mlbn;

TEST_CASE("five-point Gauss-Hermite rule matches tabulated values") {
  // numpy.polynomial.hermite.hermgauss(5)
  const double nodes[] = {-2.0201828704560856, -0.9585724646138185, 0.0, 0.9585724646138185, 2.0201828704560856};
  const double weights[] = {0.019953242059045917, 0.3936193231522411, 0.9453087204829418, 0.3936193231522411,
                            0.019953242059045917};
  auto rule = gauss_hermite(5);
  std::vector<std::size_t> order(5);
  for (std::size_t i = 0; i < 5; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rule.nodes[a] < rule.nodes[b]; });
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rule.nodes[order[i]] == doctest::Approx(nodes[i]).epsilon(1e-14));
    CHECK(rule.weights[order[i]] == doctest::Approx(weights[i]).epsilon(1e-13));
  }
}

TEST_CASE("Gauss-Hermite rules integrate polynomials exactly") {
  for (int n : {1, 2, 8, 64, 128}) {
    const auto& rule = gauss_hermite(n);
    // int x^{2k} exp(-x^2) dx = Gamma(k + 1/2)
    for (int k = 0; k < std::min(n, 12); ++k) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += rule.weights[i] * std::pow(rule.nodes[i], 2 * k);
      CHECK(sum == doctest::Approx(std::tgamma(k + 0.5)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(gauss_hermite(0), DomainError);
}

TEST_CASE("log normal cdf across the tails") {
  // scipy.special.log_ndtr
  const double z[] = {3.0, 0.5, -1.0, -4.9, -5.1, -10.0, -40.0, -200.0};
  const double expected[] = {-0.001350809964748193, -0.3689464152886563, -1.841021645009264, -14.551182689355313,
                             -15.588487091871468, -53.23128515051248, -804.6084420137539, -20006.21728089819};
  for (int i = 0; i < 8; ++i) CHECK(normal_log_cdf(z[i]) == doctest::Approx(expected[i]).epsilon(1e-14));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(inverse_mills(0.0) == doctest::Approx(2.0 / std::sqrt(2.0 * std::numbers::pi)));
  // lambda(z) ~ -z for z -> -inf
  CHECK(inverse_mills(-50.0) == doctest::Approx(50.0 + 1.0 / 50.0).epsilon(1e-5));
}
