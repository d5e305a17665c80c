#include <doctest.h>

#include <cmath>

#include "mlbn/error.hpp"
#include "mlbn/network.hpp"
#include "mlbn/prior.hpp"

using namespace mlbn;

namespace {

// Second forward implementation: scalar loops over plain arrays.
std::vector<double> naive_forward(const ThetaLevel& theta, Activation act, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (int k = 0; k < theta.depth(); ++k) {
    const Matrix& a = theta.weight(k);
    const Vector& b = theta.bias(k);
    std::vector<double> next(static_cast<std::size_t>(a.rows()));
    for (int i = 0; i < a.rows(); ++i) {
      double s = b[i];
      for (int j = 0; j < a.cols(); ++j) {
        const double in = k == 0 ? h[j] : (act == Activation::kReLU ? std::max(0.0, h[j]) : std::tanh(h[j]));
        s += a(i, j) * in;
      }
      next[static_cast<std::size_t>(i)] = s;
    }
    h = next;
  }
  return h;
}

ThetaLevel random_theta(const NetworkShape& shape, std::uint64_t seed) {
  RngStream rng(seed, 1);
  return sample(TnnPrior(1.5, shape), rng);
}

}  // namespace

TEST_CASE("shape invariants") {
  NetworkShape s(3, 10, 1, 3);
  CHECK(s.hidden_width() == 8);
  CHECK(s.rows(0) == 8);
  CHECK(s.cols(0) == 10);
  CHECK(s.rows(2) == 1);
  CHECK(s.cols(2) == 8);
  CHECK_THROWS_AS(NetworkShape(1, 1, 1, 0), ShapeError);
  CHECK_THROWS_AS(NetworkShape(2, 0, 1, 0), ShapeError);
  CHECK(parse_activation("ReLU") == Activation::kReLU);
  CHECK(parse_activation("tanh") == Activation::kTanh);
}

TEST_CASE("parameter counts") {
  CHECK(param_count(NetworkShape(2, 1, 1, 0)) == 4);
  CHECK(param_count(NetworkShape(3, 10, 1, 3)) == 169);
  const double ratio = static_cast<double>(param_count(NetworkShape(3, 10, 1, 11))) /
                       static_cast<double>(param_count(NetworkShape(3, 10, 1, 10)));
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("forward pass") {
  SUBCASE("zero network") {
    ThetaLevel theta(NetworkShape(3, 4, 2, 2));
    Vector x = Vector::Constant(4, 3.0);
    CHECK(forward(theta, Activation::kTanh, x).isZero());
  }
  SUBCASE("relu gate") {
    ThetaLevel theta(NetworkShape(2, 1, 1, 0));
    theta.weight(0)(0, 0) = 2.0;
    theta.weight(1)(0, 0) = 1.0;
    CHECK(forward(theta, Activation::kReLU, Vector::Constant(1, -3.0))[0] == 0.0);
    CHECK(forward(theta, Activation::kReLU, Vector::Constant(1, 3.0))[0] == 6.0);
  }
  SUBCASE("matches an independent loop implementation") {
    for (auto act : {Activation::kTanh, Activation::kReLU}) {
      const ThetaLevel theta = random_theta(NetworkShape(3, 5, 3, 3), 11);
      std::vector<double> x = {0.3, -1.2, 2.0, 0.7, -0.1};
      const Vector got = forward(theta, act, Eigen::Map<Vector>(x.data(), 5));
      const auto want = naive_forward(theta, act, x);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[static_cast<std::size_t>(i)]) < 1e-12);
    }
  }
  SUBCASE("batch agrees with single inputs") {
    const ThetaLevel theta = random_theta(NetworkShape(2, 3, 2, 2), 3);
    Batch xs(3, 4);
    xs << 1, 2, 3, 4, -1, 0, 1, 2, 0.5, 0.5, 0.5, -3;
    const Batch out = forward_batch(theta, Activation::kTanh, xs);
    for (int c = 0; c < 4; ++c) CHECK((out.col(c) - forward(theta, Activation::kTanh, xs.col(c))).norm() < 1e-14);
  }
  SUBCASE("errors") {
    ThetaLevel theta(NetworkShape(2, 2, 1, 1));
    CHECK_THROWS_AS(forward(theta, Activation::kTanh, Vector::Zero(3)), ShapeError);
    Vector bad = Vector::Zero(2);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(forward(theta, Activation::kTanh, bad), DomainError);
  }
}

TEST_CASE("final layer is linear") {
  ThetaLevel theta = random_theta(NetworkShape(3, 2, 2, 2), 5);
  Vector x(2);
  x << 0.4, -0.9;
  const Vector base = forward(theta, Activation::kReLU, x);
  theta.weight(2) *= -2.5;
  theta.bias(2) *= -2.5;
  CHECK((forward(theta, Activation::kReLU, x) - (-2.5) * base).norm() < 1e-12);
}

TEST_CASE("softmax") {
  Vector zero = Vector::Zero(4);
  CHECK((softmax(zero).array() - 0.25).abs().maxCoeff() < 1e-15);
  Vector big(2);
  big << 1000.0, 0.0;
  const Vector p = softmax(big);
  CHECK(p[0] == 1.0);
  CHECK(p[1] < 1e-300);
  CHECK(std::isfinite(p[1]));
  Vector h(3);
  h << 1.0, 2.0, 3.0;
  const Vector q = softmax(h);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(std::exp(i + 1.0) / z).epsilon(1e-15));
  CHECK(std::abs(q.sum() - 1.0) < 1e-15);
  CHECK((softmax((h.array() + 17.0).matrix()) - q).norm() < 1e-12);
  CHECK((log_softmax(h).array().exp().matrix() - q).norm() < 1e-15);
}

TEST_CASE("embedding of a coarse network") {
  const NetworkShape fine_shape(3, 3, 2, 3);
  const TnnPrior fine_prior(2.0, fine_shape);
  RngStream rng(77, 0);
  const ThetaLevel coarse = sample(fine_prior.at_level(2), rng);
  ThetaLevel fine = extend(fine_prior, coarse, rng);
  CHECK(embed_check(coarse, fine));
  CHECK(fine.restrict_to(2) == coarse);
  fine.weight(1)(0, 1) += 1e-9;
  CHECK_FALSE(embed_check(coarse, fine));
  const ThetaLevel finer(fine_shape.at_level(4));
  CHECK_THROWS_AS(embed_check(coarse, finer), ShapeError);
}

TEST_CASE("zero extension reproduces the coarse network") {
  for (auto act : {Activation::kTanh, Activation::kReLU}) {
    const ThetaLevel coarse = random_theta(NetworkShape(3, 2, 1, 2), 8);
    ThetaLevel fine(coarse.shape().at_level(3));
    for (int k = 0; k < 3; ++k) {
      fine.weight(k).topLeftCorner(coarse.weight(k).rows(), coarse.weight(k).cols()) = coarse.weight(k);
      fine.bias(k).head(coarse.bias(k).size()) = coarse.bias(k);
    }
    REQUIRE(embed_check(coarse, fine));
    Vector x(2);
    x << 1.5, -0.25;
    CHECK(std::abs(forward(fine, act, x)[0] - forward(coarse, act, x)[0]) < 1e-12);
  }
}

TEST_CASE("flatten round trip") {
  const ThetaLevel theta = random_theta(NetworkShape(3, 4, 2, 2), 4);
  const auto flat = theta.flatten();
  CHECK(flat.size() == theta.size());
  CHECK(ThetaLevel::unflatten(theta.shape(), flat.data(), flat.size()) == theta);
  CHECK_THROWS_AS(ThetaLevel::unflatten(theta.shape(), flat.data(), flat.size() - 1), ShapeError);
}
