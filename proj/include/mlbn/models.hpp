#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "mlbn/network.hpp"
#include "mlbn/rng.hpp"

namespace mlbn {

struct RegressionData {
  Batch inputs;       // n x N
  Batch outputs;      // m x N
  Vector noise_var;   // per output coordinate

  Eigen::Index size() const { return inputs.cols(); }
  void validate() const;
};

struct ClassificationData {
  Batch inputs;             // n x N
  std::vector<int> labels;  // 1-based class labels
  int num_classes = 2;

  Eigen::Index size() const { return inputs.cols(); }
  Batch one_hot() const;    // num_classes x N
  void validate() const;
};

/// Deterministic environment: T(x, a) = B_a x + c_a.
struct AffineTransition {
  std::vector<Matrix> maps;
  std::vector<Vector> offsets;

  int num_actions() const { return static_cast<int>(maps.size()); }
  int state_dim() const { return maps.empty() ? 0 : static_cast<int>(maps.front().rows()); }
  // 1-based action.
  Vector apply(const Vector& state, int action) const;
};

struct RlTrajectory {
  Batch states;              // state_dim x T
  std::vector<int> actions;  // 1-based
  double sigma = 0.01;
  AffineTransition transition;

  Eigen::Index size() const { return states.cols(); }
  int num_actions() const { return transition.num_actions(); }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Likelihoods

double log_lik_regression(const ThetaLevel& theta, Activation act, const RegressionData& data);
double log_lik_classification(const ThetaLevel& theta, Activation act, const ClassificationData& data);

/// log P(a = argmax_k v_k + sigma * eps_k), 1-based `action`.
double rl_log_action_prob(const Vector& v, int action, double sigma, int nodes = 64);
double rl_action_prob(const Vector& v, int action, double sigma, int nodes = 64);

double log_lik_rl(const ThetaLevel& theta, Activation act, const RlTrajectory& traj);

/// Likelihood p_l(y | theta_l) for one task; the level is that of theta.
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;

  virtual double log_lik(const ThetaLevel& theta) const = 0;
  /// Predictive quantity at x (network output, or class probabilities).
  virtual Vector predict(const ThetaLevel& theta, const Vector& x) const = 0;
  /// predict() for every column of `xs`; output_dim x K.
  virtual Batch predict_batch(const ThetaLevel& theta, const Batch& xs) const;
  virtual std::string_view name() const = 0;

  int depth() const { return depth_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  Activation activation() const { return activation_; }
  NetworkShape shape_at(int level) const { return {depth_, input_dim_, output_dim_, level}; }

 protected:
  LikelihoodModel(int depth, int input_dim, int output_dim, Activation act);

 private:
  int depth_;
  int input_dim_;
  int output_dim_;
  Activation activation_;
};

class FlatModel final : public LikelihoodModel {
 public:
  FlatModel(int depth, int input_dim, int output_dim, Activation act) : LikelihoodModel(depth, input_dim, output_dim, act) {}
  double log_lik(const ThetaLevel&) const override { return 0.0; }
  Vector predict(const ThetaLevel& theta, const Vector& x) const override;
  std::string_view name() const override { return "flat"; }
};

class RegressionModel final : public LikelihoodModel {
 public:
  RegressionModel(RegressionData data, Activation act, int depth);
  double log_lik(const ThetaLevel& theta) const override;
  Vector predict(const ThetaLevel& theta, const Vector& x) const override;
  Batch predict_batch(const ThetaLevel& theta, const Batch& xs) const override;
  std::string_view name() const override { return "regression"; }
  const RegressionData& data() const { return data_; }

 private:
  RegressionData data_;
};

class ClassificationModel final : public LikelihoodModel {
 public:
  ClassificationModel(ClassificationData data, Activation act, int depth);
  double log_lik(const ThetaLevel& theta) const override;
  Vector predict(const ThetaLevel& theta, const Vector& x) const override;
  std::string_view name() const override { return "classification"; }
  const ClassificationData& data() const { return data_; }

 private:
  ClassificationData data_;
};

class RlModel final : public LikelihoodModel {
 public:
  RlModel(RlTrajectory traj, Activation act, int depth);
  double log_lik(const ThetaLevel& theta) const override;
  Vector predict(const ThetaLevel& theta, const Vector& x) const override;
  std::string_view name() const override { return "rl"; }
  const RlTrajectory& trajectory() const { return traj_; }

 private:
  RlTrajectory traj_;
  Batch successors_;  // state_dim x (T * M), successor of (t, k) in column t*M + k
};

// ---------------------------------------------------------------------------
// Synthetic data

struct RegressionSpec {
  std::uint64_t seed = 0;
  int n_points = 200;
  int input_dim = 10;
  int depth = 2;
  int teacher_level = 7;
  double alpha = 2.0;
  Activation activation = Activation::kTanh;
  double noise_std = 0.01;
  double input_mean = 2.0;
  double input_variance = 0.5;
};

struct RegressionProblem {
  RegressionData data;
  ThetaLevel teacher;
};

RegressionProblem gen_regression(const RegressionSpec& spec);

struct SpiralSpec {
  std::uint64_t seed = 0;
  int points_per_class = 500;
  double radius = 16.0;
  double power = 0.05;
  double noise_std = 0.1;
};

ClassificationData gen_spiral(const SpiralSpec& spec);

struct RlSpec {
  std::uint64_t seed = 0;
  int horizon = 100;
  int num_actions = 8;
  int state_dim = 17;
  double sigma = 0.01;
  int depth = 2;
  int teacher_level = 7;
  double alpha = 2.0;
  Activation activation = Activation::kTanh;
  double contraction = 0.9;
  double offset_scale = 0.5;
};

struct RlProblem {
  RlTrajectory trajectory;
  ThetaLevel teacher;
};

RlProblem gen_rl(const RlSpec& spec);

/// argmax_k (v_k + sigma * eps_k), 1-based.
int noisy_argmax(const Vector& v, double sigma, RngStream& rng);

}  // namespace mlbn
