#include "mlbn/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mlbn/error.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/quadrature.hpp"

namespace mlbn {

// ---------------------------------------------------------------------------
// Data containers

void RegressionData::validate() const {
  if (inputs.cols() < 1) throw ShapeError("regression data needs at least one point");
  if (outputs.cols() != inputs.cols()) throw ShapeError("regression inputs and outputs differ in count");
  if (noise_var.size() != outputs.rows()) throw ShapeError("noise variance length must equal output dimension");
  if (!inputs.allFinite() || !outputs.allFinite()) throw DomainError("regression data contains non-finite values");
  if ((noise_var.array() <= 0.0).any() || !noise_var.allFinite()) throw DomainError("noise variances must be positive");
}

Batch ClassificationData::one_hot() const {
  Batch out = Batch::Zero(num_classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out(labels[i] - 1, static_cast<Eigen::Index>(i)) = 1.0;
  return out;
}

void ClassificationData::validate() const {
  if (inputs.cols() < 1) throw ShapeError("classification data needs at least one point");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw ShapeError("inputs and labels differ in count");
  if (num_classes < 2) throw ShapeError("classification needs at least two classes");
  if (!inputs.allFinite()) throw DomainError("classification inputs contain non-finite values");
  for (int y : labels) {
    if (y < 1 || y > num_classes) throw DomainError("label " + std::to_string(y) + " outside 1.." + std::to_string(num_classes));
  }
}

Vector AffineTransition::apply(const Vector& state, int action) const {
  if (action < 1 || action > num_actions()) throw DomainError("action " + std::to_string(action) + " out of range");
  const auto a = static_cast<std::size_t>(action - 1);
  return maps[a] * state + offsets[a];
}

void RlTrajectory::validate() const {
  if (states.cols() < 1) throw ShapeError("trajectory needs at least one step");
  if (static_cast<std::size_t>(states.cols()) != actions.size()) throw ShapeError("states and actions differ in count");
  if (!(sigma > 0.0)) throw DomainError("action noise sigma must be positive");
  if (transition.num_actions() < 1) throw ShapeError("transition has no actions");
  if (transition.state_dim() != states.rows()) throw ShapeError("transition state dimension mismatch");
  for (std::size_t a = 0; a < transition.maps.size(); ++a) {
    if (transition.maps[a].rows() != states.rows() || transition.maps[a].cols() != states.rows() ||
        transition.offsets[a].size() != states.rows()) {
      throw ShapeError("transition map " + std::to_string(a + 1) + " has wrong dimensions");
    }
  }
  for (int a : actions) {
    if (a < 1 || a > num_actions()) throw DomainError("action " + std::to_string(a) + " out of range");
  }
}

// ---------------------------------------------------------------------------
// Likelihoods

double log_lik_regression(const ThetaLevel& theta, Activation act, const RegressionData& data) {
  if (theta.shape().input_dim() != data.inputs.rows() || theta.shape().output_dim() != data.outputs.rows()) {
    throw ShapeError("regression: network dimensions do not match the data");
  }
  const Batch predicted = forward_batch(theta, act, data.inputs);
  double total = 0.0;
  for (Eigen::Index k = 0; k < data.outputs.rows(); ++k) {
    const double var = data.noise_var[k];
    const double sq = (data.outputs.row(k) - predicted.row(k)).squaredNorm();
    total += -0.5 * static_cast<double>(data.size()) * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var;
  }
  return total;
}

double log_lik_classification(const ThetaLevel& theta, Activation act, const ClassificationData& data) {
  if (theta.shape().input_dim() != data.inputs.rows() || theta.shape().output_dim() != data.num_classes) {
    throw ShapeError("classification: network dimensions do not match the data");
  }
  const Batch logits = forward_batch(theta, act, data.inputs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const auto col = logits.col(i);
    const double top = col.maxCoeff();
    const double lse = top + std::log((col.array() - top).exp().sum());
    total += col[data.labels[static_cast<std::size_t>(i)] - 1] - lse;
  }
  return total;
}

namespace {

// Beyond this many noise standard deviations below a competitor, the
// integrand's mass sits far from s = 0 and the fixed rule is re-centred.
constexpr double kPlainRuleGap = 6.0;

double log_sum_exp(const std::vector<double>& terms) {
  const double top = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

}  // namespace

double rl_log_action_prob(const Vector& v, int action, double sigma, int nodes) {
  const auto m = static_cast<int>(v.size());
  if (action < 1 || action > m) throw DomainError("action index " + std::to_string(action) + " outside 1.." + std::to_string(m));
  if (!(sigma > 0.0)) throw DomainError("action noise sigma must be positive");
  if (!v.allFinite()) throw DomainError("non-finite action values");
  if (m == 1) return 0.0;

  // With t = v_a + sigma*sqrt(2)*s the integral becomes
  //   pi^{-1/2} * int exp(-s^2) prod_{i != a} Phi(sqrt(2) s + d_i) ds.
  std::vector<double> gaps;
  gaps.reserve(static_cast<std::size_t>(m - 1));
  for (int i = 0; i < m; ++i) {
    if (i != action - 1) gaps.push_back((v[action - 1] - v[i]) / sigma);
  }
  const double min_gap = *std::min_element(gaps.begin(), gaps.end());
  const GaussHermiteRule& rule = gauss_hermite(nodes);
  const double log_norm = -0.5 * std::log(std::numbers::pi);

  auto log_product = [&](double s) {
    double acc = 0.0;
    for (double d : gaps) acc += normal_log_cdf(std::numbers::sqrt2 * s + d);
    return acc;
  };

  std::vector<double> terms(rule.nodes.size());
  if (min_gap >= -kPlainRuleGap) {
    for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = std::log(rule.weights[k]) + log_product(rule.nodes[k]);
    return std::min(0.0, log_norm + log_sum_exp(terms));
  }

  // Re-centre on the mode of the (log-concave) integrand and rescale by its
  // curvature, then apply the same rule.
  auto g = [&](double s) { return -s * s + log_product(s); };
  auto derivatives = [&](double s, double& d1, double& d2) {
    d1 = -2.0 * s;
    d2 = -2.0;
    for (double d : gaps) {
      const double z = std::numbers::sqrt2 * s + d;
      const double lam = inverse_mills(z);
      d1 += std::numbers::sqrt2 * lam;
      d2 -= 2.0 * lam * (z + lam);
    }
  };
  double s = 0.0;
  double gs = g(s);
  for (int iter = 0; iter < 200; ++iter) {
    double d1, d2;
    derivatives(s, d1, d2);
    double step = -d1 / d2;
    double next = s + step;
    double gn = g(next);
    while (gn < gs && std::abs(step) > 1e-14) {
      step *= 0.5;
      next = s + step;
      gn = g(next);
    }
    s = next;
    gs = gn;
    if (std::abs(step) < 1e-12 * std::max(1.0, std::abs(s))) break;
  }
  double d1, d2;
  derivatives(s, d1, d2);
  const double tau = std::sqrt(2.0 / -d2);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double u = rule.nodes[k];
    terms[k] = std::log(rule.weights[k]) + u * u + g(s + tau * u);
  }
  return std::min(0.0, log_norm + std::log(tau) + log_sum_exp(terms));
}

double rl_action_prob(const Vector& v, int action, double sigma, int nodes) {
  return std::exp(rl_log_action_prob(v, action, sigma, nodes));
}

namespace {

Batch successor_batch(const RlTrajectory& traj) {
  const int m = traj.num_actions();
  Batch out(traj.states.rows(), traj.states.cols() * m);
  for (Eigen::Index t = 0; t < traj.states.cols(); ++t) {
    const Vector x = traj.states.col(t);
    for (int k = 0; k < m; ++k) out.col(t * m + k) = traj.transition.apply(x, k + 1);
  }
  return out;
}

double log_lik_rl_from_successors(const ThetaLevel& theta, Activation act, const RlTrajectory& traj, const Batch& successors) {
  if (theta.shape().output_dim() != 1) throw ConfigError("RL likelihood needs a scalar value network (output_dim 1)");
  if (theta.shape().input_dim() != traj.states.rows()) throw ShapeError("RL: network input does not match state dimension");
  const Batch values = forward_batch(theta, act, successors);
  const int m = traj.num_actions();
  double total = 0.0;
  for (Eigen::Index t = 0; t < traj.states.cols(); ++t) {
    const Vector v = values.row(0).segment(t * m, m).transpose();
    total += rl_log_action_prob(v, traj.actions[static_cast<std::size_t>(t)], traj.sigma);
  }
  return total;
}

}  // namespace

double log_lik_rl(const ThetaLevel& theta, Activation act, const RlTrajectory& traj) {
  return log_lik_rl_from_successors(theta, act, traj, successor_batch(traj));
}

// ---------------------------------------------------------------------------
// Models

LikelihoodModel::LikelihoodModel(int depth, int input_dim, int output_dim, Activation act)
    : depth_(depth), input_dim_(input_dim), output_dim_(output_dim), activation_(act) {
  if (depth < 2) throw ConfigError("network depth must be at least 2");
  if (input_dim < 1 || output_dim < 1) throw ConfigError("model dimensions must be positive");
}

Batch LikelihoodModel::predict_batch(const ThetaLevel& theta, const Batch& xs) const {
  Batch out(output_dim_, xs.cols());
  for (Eigen::Index k = 0; k < xs.cols(); ++k) out.col(k) = predict(theta, xs.col(k));
  return out;
}

Vector FlatModel::predict(const ThetaLevel& theta, const Vector& x) const { return forward(theta, activation(), x); }

RegressionModel::RegressionModel(RegressionData data, Activation act, int depth)
    : LikelihoodModel(depth, static_cast<int>(data.inputs.rows()), static_cast<int>(data.outputs.rows()), act),
      data_(std::move(data)) {
  data_.validate();
}

double RegressionModel::log_lik(const ThetaLevel& theta) const { return log_lik_regression(theta, activation(), data_); }

Vector RegressionModel::predict(const ThetaLevel& theta, const Vector& x) const { return forward(theta, activation(), x); }

Batch RegressionModel::predict_batch(const ThetaLevel& theta, const Batch& xs) const {
  return forward_batch(theta, activation(), xs);
}

ClassificationModel::ClassificationModel(ClassificationData data, Activation act, int depth)
    : LikelihoodModel(depth, static_cast<int>(data.inputs.rows()), data.num_classes, act), data_(std::move(data)) {
  data_.validate();
}

double ClassificationModel::log_lik(const ThetaLevel& theta) const {
  return log_lik_classification(theta, activation(), data_);
}

Vector ClassificationModel::predict(const ThetaLevel& theta, const Vector& x) const {
  return softmax_predict(theta, activation(), x);
}

RlModel::RlModel(RlTrajectory traj, Activation act, int depth)
    : LikelihoodModel(depth, static_cast<int>(traj.states.rows()), 1, act), traj_(std::move(traj)) {
  traj_.validate();
  successors_ = successor_batch(traj_);
}

double RlModel::log_lik(const ThetaLevel& theta) const {
  return log_lik_rl_from_successors(theta, activation(), traj_, successors_);
}

Vector RlModel::predict(const ThetaLevel& theta, const Vector& x) const { return forward(theta, activation(), x); }

// ---------------------------------------------------------------------------
// Generators

namespace {

enum StreamTag : std::uint64_t { kInputs = 1, kTeacher = 2, kNoise = 3, kTransition = 4, kActions = 5 };

}  // namespace

RegressionProblem gen_regression(const RegressionSpec& spec) {
  if (spec.n_points < 1 || spec.input_dim < 1) throw ConfigError("regression generator: sizes must be positive");
  if (!(spec.noise_std > 0.0) || !(spec.input_variance > 0.0)) throw ConfigError("regression generator: spreads must be positive");
  const RngStream root(spec.seed, 0x5245475245535331ULL);

  RegressionData data;
  data.inputs.resize(spec.input_dim, spec.n_points);
  RngStream input_rng = root.child(kInputs);
  const double input_std = std::sqrt(spec.input_variance);
  for (Eigen::Index i = 0; i < data.inputs.cols(); ++i) {
    for (Eigen::Index j = 0; j < data.inputs.rows(); ++j) data.inputs(j, i) = spec.input_mean + input_std * input_rng.normal();
  }

  const TnnPrior teacher_prior(spec.alpha, NetworkShape(spec.depth, spec.input_dim, 1, spec.teacher_level), spec.activation);
  RngStream teacher_rng = root.child(kTeacher);
  ThetaLevel teacher = sample(teacher_prior, teacher_rng);

  data.outputs = forward_batch(teacher, spec.activation, data.inputs);
  RngStream noise_rng = root.child(kNoise);
  for (Eigen::Index i = 0; i < data.outputs.cols(); ++i) data.outputs(0, i) += spec.noise_std * noise_rng.normal();
  data.noise_var = Vector::Constant(1, spec.noise_std * spec.noise_std);
  data.validate();
  return {std::move(data), std::move(teacher)};
}

ClassificationData gen_spiral(const SpiralSpec& spec) {
  if (spec.points_per_class < 1) throw ConfigError("spiral generator: points_per_class must be positive");
  if (spec.noise_std < 0.0) throw ConfigError("spiral generator: noise_std must be non-negative");
  const RngStream root(spec.seed, 0x53504952414C5331ULL);
  RngStream pos_rng = root.child(kInputs);
  RngStream noise_rng = root.child(kNoise);

  ClassificationData data;
  data.num_classes = 2;
  data.inputs.resize(2, 2 * spec.points_per_class);
  data.labels.reserve(static_cast<std::size_t>(2 * spec.points_per_class));
  Eigen::Index col = 0;
  for (int cls = 1; cls <= 2; ++cls) {
    const double shift = cls == 1 ? 0.0 : std::numbers::pi;
    for (int i = 0; i < spec.points_per_class; ++i) {
      const double upsilon = pos_rng.uniform();
      const double t = pos_rng.uniform();
      const double r = spec.radius * std::pow(upsilon, spec.power);
      const double angle = 2.0 * std::pow(t, spec.power) * std::numbers::pi + shift;
      data.inputs(0, col) = r * std::cos(angle) + spec.noise_std * noise_rng.normal();
      data.inputs(1, col) = r * std::sin(angle) + spec.noise_std * noise_rng.normal();
      data.labels.push_back(cls);
      ++col;
    }
  }
  data.validate();
  return data;
}

int noisy_argmax(const Vector& v, double sigma, RngStream& rng) {
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double value = v[k] + sigma * rng.normal();
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(k);
    }
  }
  return best + 1;
}

RlProblem gen_rl(const RlSpec& spec) {
  if (spec.horizon < 1 || spec.num_actions < 1 || spec.state_dim < 1) throw ConfigError("RL generator: sizes must be positive");
  if (!(spec.sigma > 0.0)) throw ConfigError("RL generator: sigma must be positive");
  if (!(spec.contraction > 0.0 && spec.contraction < 1.0)) throw ConfigError("RL generator: contraction must lie in (0, 1)");
  const RngStream root(spec.seed, 0x524C5452414A3031ULL);

  RlTrajectory traj;
  traj.sigma = spec.sigma;
  RngStream env_rng = root.child(kTransition);
  for (int a = 0; a < spec.num_actions; ++a) {
    Matrix g(spec.state_dim, spec.state_dim);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = env_rng.normal();
    }
    // Frobenius norm bounds the spectral norm, so every map is a contraction.
    traj.transition.maps.push_back(spec.contraction * g / g.norm());
    Vector offset(spec.state_dim);
    for (Eigen::Index r = 0; r < offset.size(); ++r) offset[r] = spec.offset_scale * env_rng.normal();
    traj.transition.offsets.push_back(std::move(offset));
  }

  const TnnPrior teacher_prior(spec.alpha, NetworkShape(spec.depth, spec.state_dim, 1, spec.teacher_level), spec.activation);
  RngStream teacher_rng = root.child(kTeacher);
  ThetaLevel teacher = sample(teacher_prior, teacher_rng);

  RngStream init_rng = root.child(kInputs);
  RngStream action_rng = root.child(kActions);
  Vector x(spec.state_dim);
  for (Eigen::Index r = 0; r < x.size(); ++r) x[r] = init_rng.normal();
  traj.states.resize(spec.state_dim, spec.horizon);
  traj.actions.reserve(static_cast<std::size_t>(spec.horizon));
  for (int t = 0; t < spec.horizon; ++t) {
    traj.states.col(t) = x;
    Vector v(spec.num_actions);
    for (int k = 0; k < spec.num_actions; ++k) v[k] = forward(teacher, spec.activation, traj.transition.apply(x, k + 1))[0];
    const int a = noisy_argmax(v, spec.sigma, action_rng);
    traj.actions.push_back(a);
    x = traj.transition.apply(x, a);
  }
  traj.validate();
  return {std::move(traj), std::move(teacher)};
}

}  // namespace mlbn
