#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mlbn/models.hpp"
#include "mlbn/network.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/rng.hpp"

namespace mlbn {

/// Weighted particles on one parameter space, with cached log-likelihoods.
struct ParticlePopulation {
  std::vector<ThetaLevel> particles;
  std::vector<double> log_lik;      // model log-likelihood of each particle
  std::vector<double> log_weights;  // unnormalized
  std::vector<std::size_t> ancestors;  // parent index from the last resampling

  std::size_t size() const { return particles.size(); }
  int level() const;
  void validate() const;
  std::vector<double> normalized_weights() const;
};

struct MutationConfig {
  int n_steps = 5;
  double pcn_rho = 0.98;
  // When positive, the pCN step sqrt(1 - rho^2) is rescaled after every
  // sweep over the population towards this acceptance rate, and the adapted
  // rho is carried to the next stage.
  double adapt_target = 0.0;

  void validate() const;
};

enum class ResampleScheme { kMultinomial, kSystematic };

ResampleScheme parse_resample_scheme(std::string_view name);
std::string_view to_string(ResampleScheme scheme);

/// Effective sample size (sum w)^2 / sum w^2 of unnormalized log-weights.
double ess(const std::vector<double>& log_weights);

/// exp(log_weights) / sum, computed with max-subtraction.
std::vector<double> normalize_log_weights(const std::vector<double>& log_weights);

std::vector<std::size_t> resample_indices(const std::vector<double>& weights, std::size_t count, RngStream& rng,
                                          ResampleScheme scheme = ResampleScheme::kMultinomial);

/// Draws `count` particles by weight; output weights are uniform and
/// `ancestors` records each particle's parent.
ParticlePopulation resample(const ParticlePopulation& population, std::size_t count, RngStream& rng,
                            ResampleScheme scheme = ResampleScheme::kMultinomial);
ParticlePopulation resample_multinomial(const ParticlePopulation& population, RngStream& rng);

struct PcnStats {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  double final_rho = 0.0;  // rho in force after the last sweep

  double rate() const { return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals); }
  PcnStats& operator+=(const PcnStats& other) {
    proposals += other.proposals;
    accepted += other.accepted;
    final_rho = other.final_rho;
    return *this;
  }
};

/// One pCN move targeting prior * likelihood^temperature. `log_lik` is the
/// cached likelihood of `theta` and is updated on acceptance.
bool pcn_move(ThetaLevel& theta, double& log_lik, const TnnPrior& prior, const LikelihoodModel& model, double rho,
              double temperature, RngStream& rng);

ThetaLevel pcn_step(const ThetaLevel& theta, const TnnPrior& prior, const LikelihoodModel& model,
                    const MutationConfig& cfg, RngStream& rng);

/// n_steps sweeps of one pCN move per particle; particle i uses
/// stream.child(i). `rho` overrides cfg.pcn_rho when positive.
PcnStats pcn_mutate(ParticlePopulation& population, const TnnPrior& prior, const LikelihoodModel& model,
                    const MutationConfig& cfg, double temperature, const RngStream& stream, int threads = 1,
                    double rho = 0.0);

/// Step-size update used between sweeps when cfg.adapt_target > 0.
double adapt_rho(double rho, double acceptance, double target);

/// Likelihood of every particle, in parallel.
std::vector<double> evaluate_log_lik(const std::vector<ThetaLevel>& particles, const LikelihoodModel& model,
                                     int threads = 1);

// ---------------------------------------------------------------------------
// Single-level tempered SMC

struct SmcConfig {
  int level = 3;
  std::size_t particles = 200;
  double alpha = 2.0;
  MutationConfig mutation;
  // Explicit temperatures 0 < t_1 < ... < t_K = 1; empty means adaptive.
  std::vector<double> schedule;
  double ess_target = 0.5;          // adaptive step: incremental ESS ~ target * P
  double resample_threshold = 0.5;  // resample when ESS <= threshold * P
  ResampleScheme scheme = ResampleScheme::kMultinomial;
  int max_stages = 10000;
  int threads = 1;

  void validate() const;
};

struct SmcResult {
  ParticlePopulation population;
  std::vector<double> temperatures;  // t_1..t_K
  std::vector<double> stage_ess;     // ESS after reweighting, per stage
  double log_evidence = 0.0;
  double acceptance = 0.0;
  double final_rho = 0.0;
  std::size_t resample_count = 0;
  double cost = 0.0;  // P * K * n_steps * param_count(level)

  std::size_t stages() const { return temperatures.size(); }
};

SmcResult run_smc_tempered(const LikelihoodModel& model, const SmcConfig& config, const RngStream& rng);

/// Weighted posterior mean of model.predict over a population.
Vector weighted_predictive_mean(const ParticlePopulation& population, const LikelihoodModel& model, const Vector& x);

}  // namespace mlbn
