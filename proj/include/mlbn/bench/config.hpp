#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mlbn/mlsmc.hpp"
#include "mlbn/network.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/smc.hpp"

namespace mlbn::bench {

enum class Task { kRate, kRegression, kClassification, kRl };
enum class SamplerChoice { kSmc, kMlsmc, kBoth };

Task parse_task(std::string_view name);
std::string_view to_string(Task task);
SamplerChoice parse_sampler_choice(std::string_view name);
std::string_view to_string(SamplerChoice choice);

/// Everything an experiment depends on besides the code. Read from a flat
/// JSON object; every field has a default and unknown fields are rejected.
struct ExperimentConfig {
  Task task = Task::kRegression;
  double alpha = 2.0;
  Activation activation = Activation::kTanh;
  int depth = 2;
  int level_min = 3;
  int level_max = 6;
  int replications = 20;
  SamplerChoice samplers = SamplerChoice::kBoth;
  std::uint64_t seed = 1;
  std::string output_dir = "mlbn-out";
  int threads = 1;

  // data
  int n_points = 50;
  int input_dim = 10;
  double noise_std = 1.0;
  double input_mean = 2.0;
  double input_variance = 0.5;
  int teacher_level = 7;
  int spiral_points_per_class = 500;
  double spiral_noise = 0.1;
  int rl_horizon = 100;
  int rl_actions = 8;
  int rl_state_dim = 17;
  double rl_sigma = 0.01;
  int panel_size = 32;

  // samplers
  int n_steps = 5;
  double pcn_rho = 0.98;
  double adapt_target = 0.25;
  ResampleScheme resample = ResampleScheme::kMultinomial;
  std::size_t smc_particles = 250;  // at level_min
  double smc_growth = 2.0;          // particle factor per extra level
  double mlsmc_budget = 3.67e5;     // allocation budget at level_min, cost units
  double mlsmc_growth = 2.0;        // budget factor per extra level
  int coarsest_level = 1;
  Level0Init level0_init = Level0Init::kTempered;
  double beta = 0.0;  // 0 selects 2 alpha - 1
  double gamma = 2.0;
  std::size_t min_particles = 50;
  double min_ess = 5.0;
  double max_failure_fraction = 0.2;

  // reference
  int reference_level = 7;
  std::size_t reference_particles = 0;  // 0 selects 16x the largest SMC run

  // rate check
  std::vector<double> rate_alphas = {2.0};
  std::vector<int> rate_depths = {2, 3};
  std::vector<Activation> rate_activations = {Activation::kReLU, Activation::kTanh};
  int rate_level_min = 3;
  int rate_level_max = 9;
  std::size_t rate_samples = 100000;
  std::string rate_method = "auto";

  double effective_beta() const { return beta > 0.0 ? beta : 2.0 * alpha - 1.0; }
  std::size_t smc_particles_at(int level) const;
  double mlsmc_budget_at(int level) const;
  std::size_t largest_smc_particles() const;
  std::size_t effective_reference_particles() const;
  MutationConfig mutation() const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON of every field, in declaration order.
std::string config_to_json(const ExperimentConfig& config, int indent = 2);

}  // namespace mlbn::bench
