#include "mlbn/bench/config.hpp"

#include <cmath>
#include <functional>
#include <json.hpp>

#include "mlbn/data_io.hpp"
#include "mlbn/error.hpp"

namespace mlbn::bench {

using json = nlohmann::ordered_json;

Task parse_task(std::string_view name) {
  if (name == "rate") return Task::kRate;
  if (name == "regression") return Task::kRegression;
  if (name == "classification") return Task::kClassification;
  if (name == "rl") return Task::kRl;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kRate:
      return "rate";
    case Task::kRegression:
      return "regression";
    case Task::kClassification:
      return "classification";
    case Task::kRl:
      return "rl";
  }
  return "?";
}

SamplerChoice parse_sampler_choice(std::string_view name) {
  if (name == "smc") return SamplerChoice::kSmc;
  if (name == "mlsmc") return SamplerChoice::kMlsmc;
  if (name == "both") return SamplerChoice::kBoth;
  throw ConfigError("unknown sampler selection '" + std::string(name) + "'");
}

std::string_view to_string(SamplerChoice choice) {
  switch (choice) {
    case SamplerChoice::kSmc:
      return "smc";
    case SamplerChoice::kMlsmc:
      return "mlsmc";
    case SamplerChoice::kBoth:
      return "both";
  }
  return "?";
}

std::size_t ExperimentConfig::smc_particles_at(int level) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(smc_particles) * std::pow(smc_growth, level - level_min)));
}

double ExperimentConfig::mlsmc_budget_at(int level) const { return mlsmc_budget * std::pow(mlsmc_growth, level - level_min); }

std::size_t ExperimentConfig::largest_smc_particles() const { return smc_particles_at(level_max); }

std::size_t ExperimentConfig::effective_reference_particles() const {
  return reference_particles > 0 ? reference_particles : 16 * largest_smc_particles();
}

MutationConfig ExperimentConfig::mutation() const {
  MutationConfig m;
  m.n_steps = n_steps;
  m.pcn_rho = pcn_rho;
  m.adapt_target = adapt_target;
  return m;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(alpha > 0.5, "alpha must exceed 1/2");
  require(depth >= 2, "depth must be at least 2");
  require(level_min >= 2 && level_max <= 9 && level_min <= level_max, "levels must satisfy 2 <= level_min <= level_max <= 9");
  require(replications >= 1, "replications must be at least 1");
  require(threads >= 0, "threads must be non-negative");
  require(!output_dir.empty(), "output_dir must not be empty");
  require(n_points >= 1 && input_dim >= 1, "n_points and input_dim must be positive");
  require(noise_std > 0.0 && input_variance >= 0.0, "noise_std must be positive and input_variance non-negative");
  require(teacher_level >= 0 && teacher_level <= 12, "teacher_level out of range");
  require(spiral_points_per_class >= 1 && spiral_noise >= 0.0, "invalid spiral settings");
  require(rl_horizon >= 1 && rl_actions >= 2 && rl_state_dim >= 1 && rl_sigma > 0.0, "invalid RL settings");
  require(panel_size >= 1, "panel_size must be positive");
  mutation().validate();
  require(n_steps >= 1, "n_steps must be at least 1");
  require(smc_particles >= 2 && smc_growth >= 1.0, "smc_particles must be >= 2 and smc_growth >= 1");
  require(mlsmc_budget > 0.0 && mlsmc_growth >= 1.0, "mlsmc_budget must be positive and mlsmc_growth >= 1");
  require(coarsest_level >= 0 && coarsest_level < level_min, "coarsest_level must lie below level_min");
  require(beta >= 0.0 && gamma > 0.0, "beta must be non-negative and gamma positive");
  require(min_particles >= 1 && min_ess >= 0.0, "min_particles must be positive");
  require(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0, "max_failure_fraction must lie in [0, 1]");
  require(reference_level >= level_max && reference_level <= 12, "reference_level must be at least level_max");
  require(!rate_alphas.empty() && !rate_depths.empty() && !rate_activations.empty(), "rate lists must be non-empty");
  for (double a : rate_alphas) require(a > 0.5, "rate_alphas must exceed 1/2");
  for (int d : rate_depths) require(d >= 2, "rate_depths must be at least 2");
  require(rate_level_min >= 1 && rate_level_min < rate_level_max && rate_level_max <= 16, "invalid rate level range");
  require(rate_samples >= 2, "rate_samples must be at least 2");
  require(rate_method == "auto" || rate_method == "explicit" || rate_method == "collapsed",
          "rate_method must be auto, explicit or collapsed");
}

namespace {

struct Field {
  const char* name;
  std::function<void(ExperimentConfig&, const json&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

template <class T>
T as(const json& v, const char* name) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

#define MLBN_FIELD(member, type)                                                                       \
  Field {                                                                                            \
    #member, [](ExperimentConfig& c, const json& v) { c.member = as<type>(v, #member); },             \
        [](const ExperimentConfig& c) { return json(c.member); }                                     \
  }

#define MLBN_NAMED(member, parse)                                                                            \
  Field {                                                                                                  \
    #member, [](ExperimentConfig& c, const json& v) { c.member = parse(as<std::string>(v, #member)); },     \
        [](const ExperimentConfig& c) { return json(std::string(to_string(c.member))); }                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MLBN_NAMED(task, parse_task),
      MLBN_FIELD(alpha, double),
      MLBN_NAMED(activation, parse_activation),
      MLBN_FIELD(depth, int),
      MLBN_FIELD(level_min, int),
      MLBN_FIELD(level_max, int),
      MLBN_FIELD(replications, int),
      MLBN_NAMED(samplers, parse_sampler_choice),
      MLBN_FIELD(seed, std::uint64_t),
      MLBN_FIELD(output_dir, std::string),
      MLBN_FIELD(threads, int),
      MLBN_FIELD(n_points, int),
      MLBN_FIELD(input_dim, int),
      MLBN_FIELD(noise_std, double),
      MLBN_FIELD(input_mean, double),
      MLBN_FIELD(input_variance, double),
      MLBN_FIELD(teacher_level, int),
      MLBN_FIELD(spiral_points_per_class, int),
      MLBN_FIELD(spiral_noise, double),
      MLBN_FIELD(rl_horizon, int),
      MLBN_FIELD(rl_actions, int),
      MLBN_FIELD(rl_state_dim, int),
      MLBN_FIELD(rl_sigma, double),
      MLBN_FIELD(panel_size, int),
      MLBN_FIELD(n_steps, int),
      MLBN_FIELD(pcn_rho, double),
      MLBN_FIELD(adapt_target, double),
      MLBN_NAMED(resample, parse_resample_scheme),
      MLBN_FIELD(smc_particles, std::size_t),
      MLBN_FIELD(smc_growth, double),
      MLBN_FIELD(mlsmc_budget, double),
      MLBN_FIELD(mlsmc_growth, double),
      MLBN_FIELD(coarsest_level, int),
      MLBN_NAMED(level0_init, parse_level0_init),
      MLBN_FIELD(beta, double),
      MLBN_FIELD(gamma, double),
      MLBN_FIELD(min_particles, std::size_t),
      MLBN_FIELD(min_ess, double),
      MLBN_FIELD(max_failure_fraction, double),
      MLBN_FIELD(reference_level, int),
      MLBN_FIELD(reference_particles, std::size_t),
      Field{"rate_alphas",
            [](ExperimentConfig& c, const json& v) {
              if (!v.is_array()) throw ConfigError("field 'rate_alphas' must be an array");
              c.rate_alphas.clear();
              for (const auto& x : v) c.rate_alphas.push_back(as<double>(x, "rate_alphas"));
            },
            [](const ExperimentConfig& c) { return json(c.rate_alphas); }},
      Field{"rate_depths",
            [](ExperimentConfig& c, const json& v) {
              if (!v.is_array()) throw ConfigError("field 'rate_depths' must be an array");
              c.rate_depths.clear();
              for (const auto& x : v) c.rate_depths.push_back(as<int>(x, "rate_depths"));
            },
            [](const ExperimentConfig& c) { return json(c.rate_depths); }},
      Field{"rate_activations",
            [](ExperimentConfig& c, const json& v) {
              if (!v.is_array()) throw ConfigError("field 'rate_activations' must be an array");
              c.rate_activations.clear();
              for (const auto& x : v) c.rate_activations.push_back(parse_activation(as<std::string>(x, "rate_activations")));
            },
            [](const ExperimentConfig& c) {
              json out = json::array();
              for (Activation a : c.rate_activations) out.push_back(std::string(to_string(a)));
              return out;
            }},
      MLBN_FIELD(rate_level_min, int),
      MLBN_FIELD(rate_level_max, int),
      MLBN_FIELD(rate_samples, std::size_t),
      MLBN_FIELD(rate_method, std::string),
  };
  return table;
}

#undef MLBN_FIELD
#undef MLBN_NAMED

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig config;
  for (const auto& [key, value] : doc.items()) {
    const Field* match = nullptr;
    for (const Field& f : fields()) {
      if (key == f.name) match = &f;
    }
    if (match == nullptr) throw ConfigError("unknown config field '" + key + "'");
    if (value.is_object()) throw ConfigError("config must be flat; field '" + key + "' is an object");
    match->set(config, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string config_to_json(const ExperimentConfig& config, int indent) {
  json doc = json::object();
  for (const Field& f : fields()) doc[f.name] = f.get(config);
  return doc.dump(indent);
}

}  // namespace mlbn::bench
