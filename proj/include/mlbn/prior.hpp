#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mlbn/network.hpp"
#include "mlbn/rng.hpp"

namespace mlbn {

/// Trace-class prior: independent centered Gaussians with
///   Var(A[i][j]) = (i*j)^-alpha,  Var(b[i]) = i^-alpha   (1-based i, j).
///
/// The same rule applies to every layer, including the output layer's
/// bias where i runs over output coordinates.
class TnnPrior {
 public:
  TnnPrior(double alpha, const NetworkShape& shape, Activation activation = Activation::kTanh);

  double alpha() const { return alpha_; }
  const NetworkShape& shape() const { return shape_; }
  Activation activation() const { return activation_; }

  // 1-based indices.
  double weight_variance(int i, int j) const;
  double bias_variance(int i) const;

  TnnPrior at_level(int level) const { return {alpha_, shape_.at_level(level), activation_}; }

 private:
  double alpha_;
  NetworkShape shape_;
  Activation activation_;
};

/// One prior draw; entries are consumed from `rng` layer by layer.
ThetaLevel sample(const TnnPrior& prior, RngStream& rng);

/// Conditional prior draw of the entries that are new at `fine.shape()`'s
/// level, keeping `coarse` as the shared leading block.
ThetaLevel extend(const TnnPrior& fine, const ThetaLevel& coarse, RngStream& rng);

/// Log prior density including Gaussian normalization constants.
double log_density(const TnnPrior& prior, const ThetaLevel& theta);

/// Log density of the entries of `theta` that are not in its level-1
/// coarse block, i.e. the conditional extension density.
double log_increment_density(const TnnPrior& prior, const ThetaLevel& theta);

// ---------------------------------------------------------------------------
// Strong-rate harness: E|f_l(x) - f_{l-1}(x)|^2 under the coupled prior.

enum class RateMethod {
  // Draw the coarse network, extend it, run both forward passes.
  kExplicit,
  // Draw hidden pre-activations directly from their exact conditional
  // Gaussian law given the previous layer (same joint law as kExplicit,
  // O(depth * width) per sample).
  kCollapsed,
};

RateMethod parse_rate_method(std::string_view name);
std::string_view to_string(RateMethod method);

struct IncrementMoment {
  int level = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

struct RateRequest {
  double alpha = 2.0;
  int depth = 3;
  Activation activation = Activation::kTanh;
  int level_min = 3;
  int level_max = 9;
  std::size_t samples_per_level = 100000;
  RateMethod method = RateMethod::kExplicit;
  int output_dim = 1;
};

/// Monte Carlo estimate of the coupled increment second moment for each
/// level in [level_min, level_max], at the fixed probe input `x`.
std::vector<IncrementMoment> increment_second_moment(const RateRequest& request, const Vector& x, RngStream rng);

}  // namespace mlbn
