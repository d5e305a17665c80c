#include "mlbn/mlsmc.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>

#include "mlbn/error.hpp"
#include "mlbn/hash.hpp"
#include "mlbn/parallel.hpp"
#include "mlbn/population_io.hpp"

namespace mlbn {

namespace {

enum StreamTag : std::uint64_t { kInit = 1, kResample = 2, kMutate = 3, kMove = 4, kExtend = 5 };

void check_ess(const ParticlePopulation& pop, double min_ess, int index, LevelDiagnostics& diag) {
  double value;
  try {
    value = ess(pop.log_weights);
  } catch (const DegeneracyError& e) {
    throw DegeneracyError(std::string("G-weights collapsed: ") + e.what(), index);
  }
  diag.weight_ess = value;
  const double floor = std::min(min_ess, 0.5 * static_cast<double>(pop.size()));
  if (value < floor) {
    throw DegeneracyError("ESS of G-weights is " + std::to_string(value) + " < " + std::to_string(floor), index);
  }
}

std::filesystem::path checkpoint_path(const MlsmcConfig& config, int index) {
  return std::filesystem::path(config.checkpoint_dir) / ("population_" + std::to_string(index) + ".mlbn");
}

}  // namespace

Level0Init parse_level0_init(std::string_view name) {
  if (name == "prior") return Level0Init::kPrior;
  if (name == "tempered") return Level0Init::kTempered;
  throw ConfigError("unknown level-0 initialization '" + std::string(name) + "'");
}

std::string_view to_string(Level0Init init) { return init == Level0Init::kPrior ? "prior" : "tempered"; }

void MlsmcConfig::validate() const {
  if (levels < 2) throw ConfigError("MLSMC needs L >= 2");
  if (coarsest_level < 0 || finest_level() > 20) throw ConfigError("MLSMC levels out of range");
  if (sample_sizes.size() != static_cast<std::size_t>(levels)) {
    throw ConfigError("expected " + std::to_string(levels) + " sample sizes, got " + std::to_string(sample_sizes.size()));
  }
  for (std::size_t l = 0; l < sample_sizes.size(); ++l) {
    if (sample_sizes[l] < 1) throw ConfigError("sample sizes must be positive");
    if (l > 0 && sample_sizes[l] > sample_sizes[l - 1]) throw ConfigError("sample sizes must be non-increasing");
  }
  if (!(alpha > 0.5)) throw ConfigError("alpha must exceed 1/2");
  if (!(min_ess >= 0.0)) throw ConfigError("min_ess must be non-negative");
  mutation.validate();
}

double incremental_weight(const ThetaLevel& fine, const ThetaLevel& coarse, const LikelihoodModel& model) {
  if (!embed_check(coarse, fine)) throw CouplingError("coarse parameters are not the shared block of the fine ones");
  return model.log_lik(fine) - model.log_lik(coarse);
}

ParticlePopulation mutate_extend(const ParticlePopulation& population, const TnnPrior& fine_prior,
                                 const LikelihoodModel& model, const MutationConfig& cfg, const RngStream& rng,
                                 int threads, PcnStats* stats, double rho) {
  population.validate();
  const int fine_level = fine_prior.shape().level();
  if (fine_level < 1 || population.level() != fine_level - 1) {
    throw ShapeError("mutate_extend: population level must be one below the fine prior's");
  }
  const TnnPrior coarse_prior = fine_prior.at_level(fine_level - 1);

  ParticlePopulation moved = population;
  const PcnStats s = pcn_mutate(moved, coarse_prior, model, cfg, 1.0, rng.child(kMove), threads, rho);
  if (stats != nullptr) *stats += s;

  ParticlePopulation out;
  const std::size_t n = moved.size();
  out.particles.resize(n, ThetaLevel(fine_prior.shape()));
  out.log_lik.resize(n);
  out.log_weights.resize(n);
  out.ancestors = moved.ancestors;
  const RngStream extend_stream = rng.child(kExtend);
  parallel_for(n, threads, [&](std::size_t i) {
    RngStream r = extend_stream.child(i);
    out.particles[i] = extend(fine_prior, moved.particles[i], r);
    out.log_lik[i] = model.log_lik(out.particles[i]);
    out.log_weights[i] = out.log_lik[i] - moved.log_lik[i];
  });
  return out;
}

std::uint64_t config_fingerprint(const MlsmcConfig& config, const LikelihoodModel& model, const RngStream& rng) {
  Fnv1a h;
  h.text("mlsmc");
  h.u64(static_cast<std::uint64_t>(config.levels));
  h.u64(static_cast<std::uint64_t>(config.coarsest_level));
  for (std::size_t p : config.sample_sizes) h.u64(p);
  h.f64(config.alpha);
  h.u64(static_cast<std::uint64_t>(config.mutation.n_steps));
  h.f64(config.mutation.pcn_rho);
  h.f64(config.mutation.adapt_target);
  h.text(to_string(config.scheme));
  h.text(to_string(config.level0_init));
  h.text(model.name());
  h.u64(static_cast<std::uint64_t>(model.depth()));
  h.u64(static_cast<std::uint64_t>(model.input_dim()));
  h.u64(static_cast<std::uint64_t>(model.output_dim()));
  h.text(to_string(model.activation()));
  h.u64(rng.seed());
  h.u64(rng.stream_id());
  return h.digest();
}

MlsmcRun run_mlsmc(const LikelihoodModel& model, const MlsmcConfig& config, const RngStream& rng) {
  config.validate();
  MlsmcRun run;
  run.config = config;
  run.populations.reserve(static_cast<std::size_t>(config.levels));

  const bool checkpointing = !config.checkpoint_dir.empty();
  const std::uint64_t tag = config_fingerprint(config, model, rng);
  if (checkpointing) {
    std::error_code ec;
    std::filesystem::create_directories(config.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory '" + config.checkpoint_dir + "': " + ec.message());
  }

  double rho = config.mutation.pcn_rho;
  for (int index = 0; index < config.levels; ++index) {
    const int level = config.level_of(index);
    const std::size_t count = config.sample_sizes[static_cast<std::size_t>(index)];
    LevelDiagnostics diag;
    diag.level = level;
    diag.particles = count;

    if (checkpointing && std::filesystem::exists(checkpoint_path(config, index))) {
      PopulationFile file = load_population(checkpoint_path(config, index));
      if (file.tag == tag && file.population.size() == count && file.population.level() == level) {
        if (file.attributes.size() >= 3) {
          diag.acceptance = file.attributes[0];
          diag.stages = static_cast<std::size_t>(file.attributes[1]);
          diag.rho = file.attributes[2];
          rho = diag.rho;
        }
        diag.resumed = true;
        check_ess(file.population, config.min_ess, index, diag);
        run.populations.push_back(std::move(file.population));
        run.diagnostics.push_back(diag);
        continue;
      }
    }

    const TnnPrior prior(config.alpha, model.shape_at(level), model.activation());
    ParticlePopulation pop;
    if (index == 0 && config.level0_init == Level0Init::kTempered) {
      SmcConfig smc;
      smc.level = level;
      smc.particles = count;
      smc.alpha = config.alpha;
      smc.mutation = config.mutation;
      smc.scheme = config.scheme;
      smc.threads = config.threads;
      if (count < 2) throw ConfigError("tempered level-0 initialization needs P_0 >= 2");
      SmcResult result = run_smc_tempered(model, smc, rng.child(kInit));
      pop = std::move(result.population);
      diag.acceptance = result.acceptance;
      diag.stages = result.stages();
      rho = result.final_rho;
    } else if (index == 0) {
      const RngStream init = rng.child(kInit);
      pop.particles.resize(count, ThetaLevel(prior.shape()));
      parallel_for(count, config.threads, [&](std::size_t i) {
        RngStream r = init.child(i);
        pop.particles[i] = sample(prior, r);
      });
      pop.log_lik = evaluate_log_lik(pop.particles, model, config.threads);
      // q_0 is the level prior, so G_0 is the likelihood itself.
      pop.log_weights = pop.log_lik;
      pop.ancestors.resize(count);
      std::iota(pop.ancestors.begin(), pop.ancestors.end(), std::size_t{0});
      diag.acceptance = std::numeric_limits<double>::quiet_NaN();
    } else {
      RngStream resample_rng = rng.child({kResample, static_cast<std::uint64_t>(index)});
      const ParticlePopulation parents = resample(run.populations.back(), count, resample_rng, config.scheme);
      PcnStats stats;
      pop = mutate_extend(parents, prior, model, config.mutation, rng.child({kMutate, static_cast<std::uint64_t>(index)}),
                          config.threads, &stats, rho);
      diag.acceptance = stats.rate();
      rho = stats.final_rho;
    }
    diag.rho = rho;
    check_ess(pop, config.min_ess, index, diag);
    if (checkpointing) {
      save_population(checkpoint_path(config, index),
                       {pop, tag, {diag.acceptance, static_cast<double>(diag.stages), diag.rho}});
    }
    run.populations.push_back(std::move(pop));
    run.diagnostics.push_back(diag);
  }
  run.cost = total_cost(config, model);
  if (config.level0_init == Level0Init::kTempered && !run.diagnostics.empty()) {
    const double c0 = level_costs(config, model).front();
    run.cost += (static_cast<double>(run.diagnostics.front().stages) - 1.0) * config.sample_sizes.front() * c0;
  }
  return run;
}

namespace {

struct LevelMeans {
  Batch level0;
  std::vector<Batch> terms;
};

LevelMeans level_means(const MlsmcRun& run, const LikelihoodModel& model, const Batch& xs) {
  if (run.populations.empty()) throw ConfigError("MLSMC run has no populations");
  LevelMeans out;
  for (std::size_t l = 0; l < run.populations.size(); ++l) {
    const ParticlePopulation& pop = run.populations[l];
    std::vector<double> w;
    try {
      w = pop.normalized_weights();
    } catch (const DegeneracyError& e) {
      throw DegeneracyError(e.what(), static_cast<int>(l));
    }
    Batch weighted = Batch::Zero(model.output_dim(), xs.cols());
    Batch coarse = Batch::Zero(model.output_dim(), xs.cols());
    const int coarse_level = pop.level() - 1;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (w[i] != 0.0) weighted += w[i] * model.predict_batch(pop.particles[i], xs);
      if (l > 0) coarse += model.predict_batch(pop.particles[i].restrict_to(coarse_level), xs);
    }
    if (l == 0) {
      out.level0 = std::move(weighted);
    } else {
      coarse /= static_cast<double>(pop.size());
      out.terms.push_back(weighted - coarse);
    }
  }
  return out;
}

}  // namespace

MlEstimate ml_estimate(const MlsmcRun& run, const LikelihoodModel& model, const Vector& x) {
  Batch xs = x;
  LevelMeans means = level_means(run, model, xs);
  MlEstimate est;
  est.level0_term = means.level0.col(0);
  est.value = est.level0_term;
  for (const Batch& t : means.terms) {
    est.level_terms.push_back(t.col(0));
    est.value += t.col(0);
  }
  est.total_cost = run.cost;
  for (const auto& d : run.diagnostics) {
    est.weight_ess.push_back(d.weight_ess);
    est.acceptance.push_back(d.acceptance);
  }
  return est;
}

Batch ml_estimate_batch(const MlsmcRun& run, const LikelihoodModel& model, const Batch& xs) {
  LevelMeans means = level_means(run, model, xs);
  Batch value = means.level0;
  for (const Batch& t : means.terms) value += t;
  return value;
}

std::vector<std::size_t> allocate_samples(double budget, double beta, double gamma,
                                          const std::vector<double>& level_costs, std::size_t min_particles) {
  if (!(beta > 0.0) || !(gamma > 0.0)) throw ConfigError("beta and gamma must be positive");
  if (level_costs.empty()) throw ConfigError("allocation needs at least one level");
  if (min_particles < 1) throw ConfigError("min_particles must be positive");
  const double decay = std::exp2(-(beta + gamma) / 2.0);
  double unit = 0.0;
  double floor_cost = 0.0;
  for (std::size_t l = 0; l < level_costs.size(); ++l) {
    if (!(level_costs[l] > 0.0)) throw ConfigError("level costs must be positive");
    unit += std::pow(decay, static_cast<double>(l)) * level_costs[l];
    floor_cost += static_cast<double>(min_particles) * level_costs[l];
  }
  if (!(budget >= floor_cost)) {
    throw ConfigError("budget " + std::to_string(budget) + " cannot cover the minimum sizes (needs " +
                      std::to_string(floor_cost) + ")");
  }
  const double scale = budget / unit;
  std::vector<std::size_t> sizes(level_costs.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const double raw = std::floor(scale * std::pow(decay, static_cast<double>(l)));
    sizes[l] = std::max(min_particles, static_cast<std::size_t>(raw));
    if (l > 0) sizes[l] = std::min(sizes[l], sizes[l - 1]);
  }
  return sizes;
}

std::vector<std::size_t> allocate_samples_for_epsilon(double epsilon, double beta, double gamma, int levels,
                                                      std::size_t min_particles) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(beta > 0.0) || !(gamma > 0.0)) throw ConfigError("beta and gamma must be positive");
  if (levels < 1) throw ConfigError("allocation needs at least one level");
  double sum = 0.0;
  for (int k = 0; k < levels; ++k) sum += std::exp2(k * (gamma - beta) / 2.0);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const double raw = std::ceil(sum * std::exp2(-l * (beta + gamma) / 2.0) / (epsilon * epsilon));
    auto& p = sizes[static_cast<std::size_t>(l)];
    p = std::max(min_particles, static_cast<std::size_t>(raw));
    if (l > 0) p = std::min(p, sizes[static_cast<std::size_t>(l - 1)]);
  }
  return sizes;
}

std::vector<double> level_costs(const MlsmcConfig& config, const LikelihoodModel& model) {
  std::vector<double> costs(static_cast<std::size_t>(config.levels));
  for (int l = 0; l < config.levels; ++l) {
    costs[static_cast<std::size_t>(l)] =
        config.mutation.n_steps * static_cast<double>(param_count(model.shape_at(config.level_of(l))));
  }
  return costs;
}

double total_cost(const MlsmcConfig& config, const LikelihoodModel& model) {
  const auto costs = level_costs(config, model);
  double total = 0.0;
  for (std::size_t l = 0; l < costs.size() && l < config.sample_sizes.size(); ++l) {
    total += static_cast<double>(config.sample_sizes[l]) * costs[l];
  }
  return total;
}

}  // namespace mlbn
