#pragma once

#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlbn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
// Column-major batch of inputs: one column per data point.
using Batch = Eigen::MatrixXd;

enum class Activation { kReLU, kTanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

inline double activate(Activation act, double z) {
  return act == Activation::kReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

/// Fully-connected architecture at one resolution level. Every hidden layer
/// has width 2^level; layer k (0-based) maps cols(k) inputs to rows(k)
/// outputs.
class NetworkShape {
 public:
  NetworkShape(int depth, int input_dim, int output_dim, int level);

  int depth() const { return depth_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int level() const { return level_; }
  int hidden_width() const { return 1 << level_; }

  int rows(int layer) const { return layer == depth_ - 1 ? output_dim_ : hidden_width(); }
  int cols(int layer) const { return layer == 0 ? input_dim_ : hidden_width(); }

  NetworkShape at_level(int level) const { return {depth_, input_dim_, output_dim_, level}; }

  bool operator==(const NetworkShape&) const = default;

 private:
  int depth_;
  int input_dim_;
  int output_dim_;
  int level_;
};

/// Exact number of scalar parameters: sum over layers of rows*cols + rows.
std::size_t param_count(const NetworkShape& shape);

/// All weights and biases of one network. Value type; zero-initialized.
class ThetaLevel {
 public:
  explicit ThetaLevel(const NetworkShape& shape);

  const NetworkShape& shape() const { return shape_; }
  int level() const { return shape_.level(); }
  int depth() const { return shape_.depth(); }

  Matrix& weight(int layer) { return weights_[static_cast<std::size_t>(layer)]; }
  const Matrix& weight(int layer) const { return weights_[static_cast<std::size_t>(layer)]; }
  Vector& bias(int layer) { return biases_[static_cast<std::size_t>(layer)]; }
  const Vector& bias(int layer) const { return biases_[static_cast<std::size_t>(layer)]; }

  std::size_t size() const { return param_count(shape_); }
  bool all_finite() const;

  // Layer-by-layer, weights row-major then bias.
  std::vector<double> flatten() const;
  static ThetaLevel unflatten(const NetworkShape& shape, const double* values, std::size_t count);

  /// The leading block shared with a coarser level.
  ThetaLevel restrict_to(int coarse_level) const;

  bool operator==(const ThetaLevel& other) const;

 private:
  NetworkShape shape_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Network output g_D(x); the activation is applied to hidden layers only.
Vector forward(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Vector>& x);

/// Forward pass for every column of `inputs`; returns output_dim x N.
Batch forward_batch(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Batch>& inputs);

Vector softmax(const Eigen::Ref<const Vector>& logits);
Vector log_softmax(const Eigen::Ref<const Vector>& logits);
Vector softmax_predict(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Vector>& x);

/// True iff every entry of `coarse` equals its counterpart in the leading
/// block of `fine`. Throws ShapeError unless fine is exactly one level finer.
bool embed_check(const ThetaLevel& coarse, const ThetaLevel& fine);

}  // namespace mlbn
