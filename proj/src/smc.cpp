#include "mlbn/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mlbn/error.hpp"
#include "mlbn/parallel.hpp"

namespace mlbn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum StreamTag : std::uint64_t { kInit = 1, kMutate = 2, kResample = 3 };

double max_finite(const std::vector<double>& values) {
  double top = kNegInf;
  for (double v : values) {
    if (v > top) top = v;
  }
  return top;
}

}  // namespace

int ParticlePopulation::level() const {
  if (particles.empty()) throw ShapeError("empty population has no level");
  return particles.front().level();
}

void ParticlePopulation::validate() const {
  if (particles.empty()) throw ShapeError("population is empty");
  if (log_lik.size() != particles.size() || log_weights.size() != particles.size() ||
      ancestors.size() != particles.size()) {
    throw ShapeError("population arrays differ in length");
  }
  const NetworkShape& shape = particles.front().shape();
  for (const auto& p : particles) {
    if (!(p.shape() == shape)) throw ShapeError("population mixes network shapes");
  }
}

std::vector<double> ParticlePopulation::normalized_weights() const { return normalize_log_weights(log_weights); }

void MutationConfig::validate() const {
  if (n_steps < 0) throw ConfigError("n_steps must be non-negative");
  if (!(pcn_rho >= 0.0 && pcn_rho < 1.0)) throw ConfigError("pcn_rho must lie in [0, 1)");
  if (!(adapt_target >= 0.0 && adapt_target < 1.0)) throw ConfigError("adapt_target must lie in [0, 1)");
}

ResampleScheme parse_resample_scheme(std::string_view name) {
  if (name == "multinomial") return ResampleScheme::kMultinomial;
  if (name == "systematic") return ResampleScheme::kSystematic;
  throw ConfigError("unknown resampling scheme '" + std::string(name) + "'");
}

std::string_view to_string(ResampleScheme scheme) {
  return scheme == ResampleScheme::kMultinomial ? "multinomial" : "systematic";
}

std::vector<double> normalize_log_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw DegeneracyError("no weights to normalize");
  const double top = max_finite(log_weights);
  if (!std::isfinite(top)) throw DegeneracyError("all weights are zero or invalid");
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::isnan(log_weights[i]) ? 0.0 : std::exp(log_weights[i] - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

double ess(const std::vector<double>& log_weights) {
  const auto w = normalize_log_weights(log_weights);
  double sq = 0.0;
  for (double x : w) sq += x * x;
  return 1.0 / sq;
}

std::vector<std::size_t> resample_indices(const std::vector<double>& weights, std::size_t count, RngStream& rng,
                                          ResampleScheme scheme) {
  if (weights.empty()) throw DegeneracyError("cannot resample an empty population");
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  const double total = cdf.back();
  if (!(total > 0.0) || !std::isfinite(total)) throw DegeneracyError("resampling weights sum to zero");

  std::vector<std::size_t> out(count);
  auto locate = [&](double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * total);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  };
  if (scheme == ResampleScheme::kMultinomial) {
    for (auto& idx : out) idx = locate(rng.uniform());
  } else {
    const double offset = rng.uniform();
    for (std::size_t i = 0; i < count; ++i) out[i] = locate((static_cast<double>(i) + offset) / static_cast<double>(count));
  }
  return out;
}

ParticlePopulation resample(const ParticlePopulation& population, std::size_t count, RngStream& rng,
                            ResampleScheme scheme) {
  const auto idx = resample_indices(population.normalized_weights(), count, rng, scheme);
  ParticlePopulation out;
  out.particles.reserve(count);
  out.log_lik.reserve(count);
  for (std::size_t j : idx) {
    out.particles.push_back(population.particles[j]);
    out.log_lik.push_back(population.log_lik[j]);
  }
  out.log_weights.assign(count, 0.0);
  out.ancestors = idx;
  return out;
}

ParticlePopulation resample_multinomial(const ParticlePopulation& population, RngStream& rng) {
  return resample(population, population.size(), rng, ResampleScheme::kMultinomial);
}

bool pcn_move(ThetaLevel& theta, double& log_lik, const TnnPrior& prior, const LikelihoodModel& model, double rho,
              double temperature, RngStream& rng) {
  ThetaLevel proposal = sample(prior, rng);
  const double scale = std::sqrt(1.0 - rho * rho);
  for (int k = 0; k < theta.depth(); ++k) {
    proposal.weight(k) = rho * theta.weight(k) + scale * proposal.weight(k);
    proposal.bias(k) = rho * theta.bias(k) + scale * proposal.bias(k);
  }
  const double proposed = model.log_lik(proposal);
  const double log_u = std::log(rng.uniform());
  if (std::isnan(proposed)) return false;
  const double log_accept = temperature == 0.0 ? 0.0 : temperature * (proposed - log_lik);
  if (log_u < log_accept) {
    theta = std::move(proposal);
    log_lik = proposed;
    return true;
  }
  return false;
}

ThetaLevel pcn_step(const ThetaLevel& theta, const TnnPrior& prior, const LikelihoodModel& model,
                    const MutationConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (!theta.all_finite()) throw DomainError("pcn_step: state has non-finite entries");
  ThetaLevel state = theta;
  double ll = model.log_lik(state);
  pcn_move(state, ll, prior, model, cfg.pcn_rho, 1.0, rng);
  return state;
}

double adapt_rho(double rho, double acceptance, double target) {
  const double step = std::sqrt(1.0 - rho * rho);
  const double change = std::clamp(0.5 * (acceptance - target) / (target * (1.0 - target)), -std::log(4.0), std::log(4.0));
  const double next = std::clamp(step * std::exp(change), 1e-6, 1.0);
  return std::sqrt(1.0 - next * next);
}

PcnStats pcn_mutate(ParticlePopulation& population, const TnnPrior& prior, const LikelihoodModel& model,
                    const MutationConfig& cfg, double temperature, const RngStream& stream, int threads,
                    double rho) {
  cfg.validate();
  if (rho <= 0.0) rho = cfg.pcn_rho;
  const std::size_t n = population.size();
  std::vector<RngStream> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams.push_back(stream.child(i));

  PcnStats stats;
  std::vector<unsigned char> accepted(n, 0);
  for (int sweep = 0; sweep < cfg.n_steps; ++sweep) {
    parallel_for(n, threads, [&](std::size_t i) {
      accepted[i] = pcn_move(population.particles[i], population.log_lik[i], prior, model, rho, temperature, streams[i]);
    });
    const auto count = static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), 1));
    stats.proposals += n;
    stats.accepted += count;
    if (cfg.adapt_target > 0.0 && n > 0) {
      rho = adapt_rho(rho, static_cast<double>(count) / static_cast<double>(n), cfg.adapt_target);
    }
  }
  stats.final_rho = rho;
  return stats;
}

std::vector<double> evaluate_log_lik(const std::vector<ThetaLevel>& particles, const LikelihoodModel& model,
                                     int threads) {
  std::vector<double> out(particles.size());
  parallel_for(particles.size(), threads, [&](std::size_t i) { out[i] = model.log_lik(particles[i]); });
  return out;
}

// ---------------------------------------------------------------------------

void SmcConfig::validate() const {
  if (particles < 2) throw ConfigError("SMC needs at least two particles");
  if (level < 0 || level > 20) throw ConfigError("SMC level out of range");
  if (!(alpha > 0.5)) throw ConfigError("alpha must exceed 1/2");
  mutation.validate();
  if (!(ess_target > 0.0 && ess_target < 1.0)) throw ConfigError("ess_target must lie in (0, 1)");
  if (!(resample_threshold >= 0.0 && resample_threshold <= 1.0)) throw ConfigError("resample_threshold must lie in [0, 1]");
  double prev = 0.0;
  for (double t : schedule) {
    if (!(t > prev && t <= 1.0)) throw ConfigError("temperature schedule must increase strictly within (0, 1]");
    prev = t;
  }
  if (!schedule.empty() && schedule.back() != 1.0) throw ConfigError("temperature schedule must end at 1");
}

namespace {

// P * (sum W_i w_i)^2 / sum W_i w_i^2 with w_i = exp(delta * ll_i): the
// conditional ESS of one reweighting step relative to the current weights.
double conditional_ess(const std::vector<double>& weights, const std::vector<double>& ll, double delta) {
  const double top = max_finite(ll);
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < ll.size(); ++i) {
    const double w = std::exp(delta * (ll[i] - top));
    s1 += weights[i] * w;
    s2 += weights[i] * w * w;
  }
  if (!(s2 > 0.0)) return 0.0;
  return static_cast<double>(ll.size()) * s1 * s1 / s2;
}

double next_increment(const std::vector<double>& weights, const std::vector<double>& ll, double remaining,
                      double target) {
  if (conditional_ess(weights, ll, remaining) >= target) return remaining;
  double lo = 0.0;
  double hi = remaining;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (conditional_ess(weights, ll, mid) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace

SmcResult run_smc_tempered(const LikelihoodModel& model, const SmcConfig& config, const RngStream& rng) {
  config.validate();
  const TnnPrior prior(config.alpha, model.shape_at(config.level), model.activation());
  const std::size_t n = config.particles;

  SmcResult result;
  ParticlePopulation& pop = result.population;
  pop.particles.reserve(n);
  const RngStream init = rng.child(kInit);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r = init.child(i);
    pop.particles.push_back(sample(prior, r));
  }
  pop.log_lik = evaluate_log_lik(pop.particles, model, config.threads);
  pop.log_weights.assign(n, 0.0);
  pop.ancestors.resize(n);
  std::iota(pop.ancestors.begin(), pop.ancestors.end(), std::size_t{0});

  const double p = static_cast<double>(n);
  PcnStats stats;
  double rho = config.mutation.pcn_rho;
  double t = 0.0;
  std::size_t stage = 0;
  while (t < 1.0) {
    if (static_cast<int>(stage) >= config.max_stages) throw DegeneracyError("tempering did not reach t = 1");
    for (double ll : pop.log_lik) {
      if (std::isnan(ll)) throw DomainError("likelihood returned NaN");
    }
    if (!std::isfinite(max_finite(pop.log_lik))) throw DegeneracyError("every particle has zero likelihood");

    const auto weights = pop.normalized_weights();
    double next;
    if (config.schedule.empty()) {
      next = t + next_increment(weights, pop.log_lik, 1.0 - t, config.ess_target * p);
      if (next > 1.0 || 1.0 - next < 1e-12) next = 1.0;
    } else {
      next = config.schedule[stage];
    }
    const double delta = next - t;

    // log sum_i W_i exp(delta * ll_i)
    const double top = max_finite(pop.log_lik);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += weights[i] * std::exp(delta * (pop.log_lik[i] - top));
    if (!(acc > 0.0)) throw DegeneracyError("all incremental weights underflowed");
    result.log_evidence += delta * top + std::log(acc);
    for (std::size_t i = 0; i < n; ++i) pop.log_weights[i] += delta * pop.log_lik[i];
    t = next;

    const double current_ess = ess(pop.log_weights);
    result.stage_ess.push_back(current_ess);
    result.temperatures.push_back(t);
    if (current_ess <= config.resample_threshold * p) {
      RngStream rr = rng.child({kResample, stage});
      pop = resample(pop, n, rr, config.scheme);
      ++result.resample_count;
    }
    stats += pcn_mutate(pop, prior, model, config.mutation, t, rng.child({kMutate, stage}), config.threads, rho);
    rho = stats.final_rho;
    ++stage;
  }
  result.acceptance = stats.rate();
  result.final_rho = rho;
  result.cost = p * static_cast<double>(result.stages()) * config.mutation.n_steps *
                static_cast<double>(param_count(prior.shape()));
  return result;
}

Vector weighted_predictive_mean(const ParticlePopulation& population, const LikelihoodModel& model, const Vector& x) {
  const auto w = population.normalized_weights();
  Vector mean = Vector::Zero(model.output_dim());
  for (std::size_t i = 0; i < population.size(); ++i) {
    if (w[i] == 0.0) continue;
    mean += w[i] * model.predict(population.particles[i], x);
  }
  return mean;
}

}  // namespace mlbn
