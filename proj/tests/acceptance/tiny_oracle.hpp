#pragma once

// Dense-quadrature posterior predictive mean for a one-hidden-layer network
// with scalar input and output. The first layer (W0, b0) is integrated on a
// Gauss-Hermite tensor grid under its Gaussian prior; the output layer is
// linear-Gaussian given the hidden features and is integrated exactly.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mlbn/models.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/quadrature.hpp"

namespace mlbn::oracle {

struct TinyInstance {
  RegressionData data;  // 1 x N inputs, 1 x N outputs
  double alpha = 2.0;
  Activation activation = Activation::kTanh;
  int level = 1;  // hidden width 2^level
};

/// Posterior mean of f(x) at each test input under the level network.
/// Cost is nodes^(2 * width) grid points.
inline Vector tiny_posterior_mean(const TinyInstance& inst, const std::vector<double>& test_inputs, int nodes) {
  if (inst.data.inputs.rows() != 1 || inst.data.outputs.rows() != 1) {
    throw std::invalid_argument("tiny oracle needs scalar input and output");
  }
  const NetworkShape shape(2, 1, 1, inst.level);
  const TnnPrior prior(inst.alpha, shape, inst.activation);
  const int width = shape.hidden_width();
  const int dims = 2 * width;  // W0 column then b0
  const auto n = static_cast<int>(inst.data.size());
  const double noise_var = inst.data.noise_var[0];
  const int k = static_cast<int>(test_inputs.size());

  std::vector<double> sd(static_cast<std::size_t>(dims));
  for (int i = 0; i < width; ++i) {
    sd[static_cast<std::size_t>(i)] = std::sqrt(prior.weight_variance(i + 1, 1));
    sd[static_cast<std::size_t>(width + i)] = std::sqrt(prior.bias_variance(i + 1));
  }
  // output layer prior: W1 entries (1, j) then b1
  Eigen::VectorXd lambda(width + 1);
  for (int j = 0; j < width; ++j) lambda[j] = prior.weight_variance(1, j + 1);
  lambda[width] = prior.bias_variance(1);

  const GaussHermiteRule& rule = gauss_hermite(nodes);
  const Eigen::VectorXd y = inst.data.outputs.row(0).transpose();

  // running log-sum-exp over the grid
  double max_log = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  Vector acc = Vector::Zero(k);
  std::vector<int> idx(static_cast<std::size_t>(dims), 0);
  Eigen::MatrixXd phi(n, width + 1);
  Eigen::MatrixXd phi_test(k, width + 1);
  std::vector<double> theta(static_cast<std::size_t>(dims));
  while (true) {
    double log_node = 0.0;
    for (int d = 0; d < dims; ++d) {
      const auto q = static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]);
      theta[static_cast<std::size_t>(d)] = std::sqrt(2.0) * sd[static_cast<std::size_t>(d)] * rule.nodes[q];
      log_node += std::log(rule.weights[q]);
    }
    auto hidden = [&](double x, int i) {
      return activate(inst.activation, theta[static_cast<std::size_t>(i)] * x + theta[static_cast<std::size_t>(width + i)]);
    };
    for (int r = 0; r < n; ++r) {
      for (int i = 0; i < width; ++i) phi(r, i) = hidden(inst.data.inputs(0, r), i);
      phi(r, width) = 1.0;
    }
    for (int r = 0; r < k; ++r) {
      for (int i = 0; i < width; ++i) phi_test(r, i) = hidden(test_inputs[static_cast<std::size_t>(r)], i);
      phi_test(r, width) = 1.0;
    }
    Eigen::MatrixXd cov = phi * lambda.asDiagonal() * phi.transpose();
    cov.diagonal().array() += noise_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd alpha_vec = llt.solve(y);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double log_marg = -0.5 * (y.dot(alpha_vec) + log_det + n * std::log(2.0 * M_PI));
    const Eigen::VectorXd mean_out = lambda.asDiagonal() * (phi.transpose() * alpha_vec);
    const double lw = log_node + log_marg;
    if (lw > max_log) {
      const double scale = std::exp(max_log - lw);
      total *= scale;
      acc *= scale;
      max_log = lw;
    }
    const double w = std::exp(lw - max_log);
    total += w;
    acc += w * (phi_test * mean_out);

    int d = 0;
    while (d < dims && ++idx[static_cast<std::size_t>(d)] == nodes) idx[static_cast<std::size_t>(d++)] = 0;
    if (d == dims) break;
  }
  return acc / total;
}

/// The fixed tiny instance: five noisy draws of a width-2 teacher.
inline TinyInstance tiny_instance(std::uint64_t seed) {
  RegressionSpec spec;
  spec.seed = seed;
  spec.n_points = 5;
  spec.input_dim = 1;
  spec.depth = 2;
  spec.teacher_level = 1;
  spec.alpha = 2.0;
  spec.noise_std = 0.5;
  spec.input_mean = 0.0;
  spec.input_variance = 0.25;
  TinyInstance inst;
  inst.data = gen_regression(spec).data;
  return inst;
}

}  // namespace mlbn::oracle
