#include <doctest.h>

#include <cmath>

#include "acceptance/tiny_oracle.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/rng.hpp"

using namespace mlbn;

TEST_CASE("tiny oracle: grid refinement converges") {
  const auto inst = oracle::tiny_instance(7);
  const std::vector<double> xs{-1.5, 0.3, 1.2};
  const Vector a = oracle::tiny_posterior_mean(inst, xs, 32);
  const Vector b = oracle::tiny_posterior_mean(inst, xs, 40);
  const Vector c = oracle::tiny_posterior_mean(inst, xs, 48);
  for (int i = 0; i < 3; ++i) {
    // successive refinements shrink geometrically
    CHECK(std::abs(c[i] - b[i]) < 0.75 * std::abs(b[i] - a[i]) + 1e-9);
    CHECK(std::abs(c[i] - b[i]) < 5e-4);
  }
}

TEST_CASE("tiny oracle: level 0 agrees with prior importance sampling") {
  // width 1 gives a 2-d grid, cheap enough for a large independent check
  auto inst = oracle::tiny_instance(7);
  inst.level = 0;
  const std::vector<double> xs{-1.5, 0.3, 1.2};
  const Vector grid = oracle::tiny_posterior_mean(inst, xs, 60);

  const RegressionModel model(inst.data, inst.activation, 2);
  const TnnPrior prior(inst.alpha, model.shape_at(0), inst.activation);
  RngStream rng(99, 0);
  const int n = 400000;
  std::vector<double> log_w(n);
  std::vector<Vector> preds(n);
  double max_log = -1e300;
  for (int i = 0; i < n; ++i) {
    const ThetaLevel t = sample(prior, rng);
    log_w[i] = model.log_lik(t);
    max_log = std::max(max_log, log_w[i]);
    preds[i].resize(3);
    for (int j = 0; j < 3; ++j) preds[i][j] = model.predict(t, Vector::Constant(1, xs[j]))[0];
  }
  std::vector<double> w(n);
  double sw = 0.0;
  double sw2 = 0.0;
  for (int i = 0; i < n; ++i) {
    w[i] = std::exp(log_w[i] - max_log);
    sw += w[i];
    sw2 += w[i] * w[i];
  }
  for (int j = 0; j < 3; ++j) {
    double est = 0.0;
    for (int i = 0; i < n; ++i) est += w[i] * preds[i][j];
    est /= sw;
    // delta-method SE of the self-normalized estimator
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += w[i] * w[i] * (preds[i][j] - est) * (preds[i][j] - est);
    const double se = std::sqrt(var) / sw;
    CHECK(sw * sw / sw2 > 1000.0);
    CHECK(std::abs(est - grid[j]) < 4.0 * se);
  }
}
