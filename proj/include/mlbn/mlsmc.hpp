#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mlbn/models.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/smc.hpp"

namespace mlbn {

enum class Level0Init {
  // q_0 is the level prior, so G_0 is the likelihood.
  kPrior,
  // Population 0 comes from tempered SMC on pi at the coarsest level and
  // keeps that sampler's final weights as G_0.
  kTempered,
};

Level0Init parse_level0_init(std::string_view name);
std::string_view to_string(Level0Init init);

struct MlsmcConfig {
  int levels = 3;          // L: number of populations
  int coarsest_level = 1;  // network level of population 0
  std::vector<std::size_t> sample_sizes;  // P_0 >= ... >= P_{L-1} >= 1
  double alpha = 2.0;
  MutationConfig mutation;
  ResampleScheme scheme = ResampleScheme::kMultinomial;
  Level0Init level0_init = Level0Init::kPrior;
  // Abort when the ESS of a population's G-weights falls below
  // min(min_ess, P_l / 2).
  double min_ess = 5.0;
  int threads = 1;
  // When non-empty, each finished population is written here and a rerun
  // with the same config and stream resumes after the last one found.
  std::string checkpoint_dir;

  int finest_level() const { return coarsest_level + levels - 1; }
  int level_of(int index) const { return coarsest_level + index; }
  void validate() const;
};

struct LevelDiagnostics {
  int level = 0;               // network level of the population
  std::size_t particles = 0;
  double weight_ess = 0.0;     // ESS of the G-weights
  double acceptance = 0.0;     // pCN acceptance; NaN for prior-initialized population 0
  std::size_t stages = 0;      // tempering stages (tempered population 0 only)
  double rho = 0.0;            // pCN rho after this population's moves
  bool resumed = false;        // loaded from a checkpoint
};

/// Output of one multilevel run. Population l lives on the network space of level
/// coarsest_level + l; its log_weights hold log G_l.
struct MlsmcRun {
  MlsmcConfig config;
  std::vector<ParticlePopulation> populations;
  std::vector<LevelDiagnostics> diagnostics;
  // total_cost(config), with population 0's term replaced by the tempered
  // sampler's cost when that initialization is used.
  double cost = 0.0;

  std::size_t mutation_stages() const { return populations.empty() ? 0 : populations.size() - 1; }
};

/// log G = log p_l(y | fine) - log p_{l-1}(y | coarse). Throws CouplingError
/// unless `coarse` is the shared block of `fine`.
double incremental_weight(const ThetaLevel& fine, const ThetaLevel& coarse, const LikelihoodModel& model);

/// Resampled population on level l-1 -> n_steps pCN moves targeting pi_{l-1}
/// -> conditional-prior extension to level l. The returned particles carry
/// the fine likelihood in log_lik and log G in log_weights.
ParticlePopulation mutate_extend(const ParticlePopulation& population, const TnnPrior& fine_prior,
                                 const LikelihoodModel& model, const MutationConfig& cfg, const RngStream& rng,
                                 int threads = 1, PcnStats* stats = nullptr, double rho = 0.0);

MlsmcRun run_mlsmc(const LikelihoodModel& model, const MlsmcConfig& config, const RngStream& rng);

struct MlEstimate {
  Vector value;
  Vector level0_term;
  std::vector<Vector> level_terms;  // one per population after the first
  double total_cost = 0.0;
  std::vector<double> weight_ess;
  std::vector<double> acceptance;
};

/// Multilevel estimate of the finest-level posterior mean of model.predict
/// at x.
MlEstimate ml_estimate(const MlsmcRun& run, const LikelihoodModel& model, const Vector& x);

/// ml_estimate for every column of `xs`; returns output_dim x K values.
Batch ml_estimate_batch(const MlsmcRun& run, const LikelihoodModel& model, const Batch& xs);

/// Sizes proportional to 2^{-l (beta + gamma) / 2} scaled so that
/// sum P_l * level_costs[l] meets `budget`, floored at `min_particles`.
std::vector<std::size_t> allocate_samples(double budget, double beta, double gamma,
                                          const std::vector<double>& level_costs, std::size_t min_particles = 50);

/// Sizes for a target root-MSE epsilon under V_l ~ 2^{-beta l},
/// C_l ~ 2^{gamma l} with unit constants.
std::vector<std::size_t> allocate_samples_for_epsilon(double epsilon, double beta, double gamma, int levels,
                                                      std::size_t min_particles = 1);

/// n_steps * param_count of each population's level.
std::vector<double> level_costs(const MlsmcConfig& config, const LikelihoodModel& model);

/// sum_l P_l * n_steps * param_count(level of population l).
double total_cost(const MlsmcConfig& config, const LikelihoodModel& model);

/// Digest of everything that determines a run besides the data.
std::uint64_t config_fingerprint(const MlsmcConfig& config, const LikelihoodModel& model, const RngStream& rng);

}  // namespace mlbn
