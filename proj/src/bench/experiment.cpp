#include "mlbn/bench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <thread>

#include "mlbn/bench/emit.hpp"
#include "mlbn/data_io.hpp"
#include "mlbn/error.hpp"
#include "mlbn/hash.hpp"
#include "mlbn/parallel.hpp"

namespace mlbn::bench {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kPanelStream = 0x50414e454cULL;
constexpr std::uint64_t kReferenceStream = 0x524546ULL;
constexpr std::uint64_t kReferenceCheckStream = 0x524546434bULL;
constexpr std::uint64_t kBenchStream = 0x42454e4348ULL;
constexpr std::uint64_t kRateStream = 0x52415445ULL;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Runs fn(i) for i in [0, n) with workers pulling the next index, so long
// and short jobs mix; results must be written to slot i.
template <typename Fn>
void dynamic_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

Batch predictive_mean(const ParticlePopulation& pop, const LikelihoodModel& model, const Batch& xs) {
  const auto w = pop.normalized_weights();
  Batch mean = Batch::Zero(model.output_dim(), xs.cols());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (w[i] != 0.0) mean += w[i] * model.predict_batch(pop.particles[i], xs);
  }
  return mean;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::uint64_t sampler_tag(Sampler s) { return s == Sampler::kSmc ? 1 : 2; }

}  // namespace

// ---------------------------------------------------------------------------
// Tasks

TaskInstance make_task(const ExperimentConfig& config) {
  config.validate();
  TaskInstance task;
  RngStream panel_rng(config.seed, kPanelStream);
  const auto k = static_cast<Eigen::Index>(config.panel_size);
  switch (config.task) {
    case Task::kRate:
    case Task::kRegression: {
      RegressionSpec spec;
      spec.seed = config.seed;
      spec.n_points = config.n_points;
      spec.input_dim = config.input_dim;
      spec.depth = config.depth;
      spec.teacher_level = config.teacher_level;
      spec.alpha = config.alpha;
      spec.activation = config.activation;
      spec.noise_std = config.noise_std;
      spec.input_mean = config.input_mean;
      spec.input_variance = config.input_variance;
      RegressionProblem p = gen_regression(spec);
      task.model = std::make_unique<RegressionModel>(std::move(p.data), config.activation, config.depth);
      task.panel.resize(config.input_dim, k);
      const double sd = std::sqrt(config.input_variance);
      for (Eigen::Index c = 0; c < k; ++c) {
        for (int j = 0; j < config.input_dim; ++j) task.panel(j, c) = config.input_mean + sd * panel_rng.normal();
      }
      break;
    }
    case Task::kClassification: {
      ClassificationData d = gen_spiral({.seed = config.seed,
                                         .points_per_class = config.spiral_points_per_class,
                                         .noise_std = config.spiral_noise});
      task.model = std::make_unique<ClassificationModel>(std::move(d), config.activation, config.depth);
      const int per_class = (config.panel_size + 1) / 2;
      const ClassificationData panel =
          gen_spiral({.seed = panel_rng.next_u64(), .points_per_class = per_class, .noise_std = config.spiral_noise});
      task.panel.resize(2, k);
      for (Eigen::Index c = 0; c < k; ++c) {
        const Eigen::Index src = (c % 2 == 0) ? c / 2 : per_class + c / 2;
        task.panel.col(c) = panel.inputs.col(src);
      }
      break;
    }
    case Task::kRl: {
      RlSpec spec;
      spec.seed = config.seed;
      spec.horizon = config.rl_horizon;
      spec.num_actions = config.rl_actions;
      spec.state_dim = config.rl_state_dim;
      spec.sigma = config.rl_sigma;
      spec.depth = config.depth;
      spec.teacher_level = config.teacher_level;
      spec.alpha = config.alpha;
      spec.activation = config.activation;
      RlProblem p = gen_rl(spec);
      task.model = std::make_unique<RlModel>(std::move(p.trajectory), config.activation, config.depth);
      RlSpec panel_spec = spec;
      panel_spec.seed = panel_rng.next_u64();
      panel_spec.horizon = config.panel_size;
      task.panel = gen_rl(panel_spec).trajectory.states;
      break;
    }
  }
  return task;
}

// ---------------------------------------------------------------------------
// Reference

std::uint64_t reference_fingerprint(const ExperimentConfig& c) {
  Fnv1a h;
  h.text("reference");
  h.text(to_string(c.task == Task::kRate ? Task::kRegression : c.task));
  h.f64(c.alpha);
  h.text(to_string(c.activation));
  h.u64(static_cast<std::uint64_t>(c.depth));
  h.u64(c.seed);
  h.u64(static_cast<std::uint64_t>(c.n_points));
  h.u64(static_cast<std::uint64_t>(c.input_dim));
  h.f64(c.noise_std);
  h.f64(c.input_mean);
  h.f64(c.input_variance);
  h.u64(static_cast<std::uint64_t>(c.teacher_level));
  h.u64(static_cast<std::uint64_t>(c.spiral_points_per_class));
  h.f64(c.spiral_noise);
  h.u64(static_cast<std::uint64_t>(c.rl_horizon));
  h.u64(static_cast<std::uint64_t>(c.rl_actions));
  h.u64(static_cast<std::uint64_t>(c.rl_state_dim));
  h.f64(c.rl_sigma);
  h.u64(static_cast<std::uint64_t>(c.panel_size));
  h.u64(static_cast<std::uint64_t>(c.n_steps));
  h.f64(c.pcn_rho);
  h.f64(c.adapt_target);
  h.text(to_string(c.resample));
  h.u64(static_cast<std::uint64_t>(c.reference_level));
  h.u64(c.effective_reference_particles());
  return h.digest();
}

std::map<std::string, std::uint64_t> stream_tags() {
  return {{"panel", kPanelStream}, {"reference", kReferenceStream}, {"reference_check", kReferenceCheckStream},
          {"bench", kBenchStream}, {"rate", kRateStream}};
}

namespace {

SmcConfig reference_smc(const ExperimentConfig& config, std::size_t particles) {
  SmcConfig smc;
  smc.level = config.reference_level;
  smc.particles = particles;
  smc.alpha = config.alpha;
  smc.mutation = config.mutation();
  smc.scheme = config.resample;
  smc.threads = resolve_threads(config.threads);
  return smc;
}

}  // namespace

double reference_self_check(const ExperimentConfig& config, const TaskInstance& task, const Reference& ref) {
  const SmcResult r = run_smc_tempered(*task.model, reference_smc(config, 2 * ref.particles),
                                       RngStream(config.seed, kReferenceCheckStream));
  const Batch values = predictive_mean(r.population, *task.model, task.panel);
  return (values - ref.values).squaredNorm() / static_cast<double>(values.size());
}

Reference compute_reference(const ExperimentConfig& config, const TaskInstance& task) {
  const SmcConfig smc = reference_smc(config, config.effective_reference_particles());
  const SmcResult r = run_smc_tempered(*task.model, smc, RngStream(config.seed, kReferenceStream));
  Reference ref;
  ref.panel = task.panel;
  ref.values = predictive_mean(r.population, *task.model, task.panel);
  ref.level = config.reference_level;
  ref.particles = smc.particles;
  ref.stages = r.stages();
  ref.cost = r.cost;
  ref.fingerprint = reference_fingerprint(config);
  ref.checksum = fnv1a64(reference_csv(ref));
  return ref;
}

std::string reference_csv(const Reference& ref) {
  std::ostringstream out;
  out << "k";
  for (Eigen::Index j = 0; j < ref.panel.rows(); ++j) out << ",x" << j + 1;
  for (Eigen::Index j = 0; j < ref.values.rows(); ++j) out << ",f" << j + 1;
  out << '\n';
  for (Eigen::Index c = 0; c < ref.panel.cols(); ++c) {
    out << c + 1;
    for (Eigen::Index j = 0; j < ref.panel.rows(); ++j) out << ',' << format_double(ref.panel(j, c));
    for (Eigen::Index j = 0; j < ref.values.rows(); ++j) out << ',' << format_double(ref.values(j, c));
    out << '\n';
  }
  return out.str();
}

void save_reference(const std::filesystem::path& dir, const Reference& ref) {
  json meta = json::object();
  meta["fingerprint"] = hex(ref.fingerprint);
  meta["checksum_fnv1a64"] = hex(ref.checksum);
  meta["level"] = ref.level;
  meta["hidden_width"] = 1 << ref.level;
  meta["particles"] = ref.particles;
  meta["stages"] = ref.stages;
  meta["cost"] = ref.cost;
  meta["panel_size"] = ref.panel.cols();
  meta["output_dim"] = ref.values.rows();
  write_file_atomic(dir / "reference.csv", reference_csv(ref));
  write_file_atomic(dir / "reference.json", meta.dump(2) + "\n");
}

std::optional<Reference> load_reference(const std::filesystem::path& dir, const ExperimentConfig& config) {
  if (!std::filesystem::exists(dir / "reference.json") || !std::filesystem::exists(dir / "reference.csv")) {
    return std::nullopt;
  }
  json meta;
  try {
    meta = json::parse(read_file(dir / "reference.json"));
  } catch (const json::exception& e) {
    throw IoError("cannot parse '" + (dir / "reference.json").string() + "': " + e.what());
  }
  if (meta.value("fingerprint", std::string()) != hex(reference_fingerprint(config))) return std::nullopt;
  const std::string csv = read_file(dir / "reference.csv");
  if (hex(fnv1a64(csv)) != meta.value("checksum_fnv1a64", std::string())) {
    throw IoError("reference '" + (dir / "reference.csv").string() + "' does not match its checksum");
  }
  Reference ref;
  ref.fingerprint = reference_fingerprint(config);
  ref.checksum = fnv1a64(csv);
  ref.level = meta.at("level").get<int>();
  ref.particles = meta.at("particles").get<std::size_t>();
  ref.stages = meta.at("stages").get<std::size_t>();
  ref.cost = meta.at("cost").get<double>();
  const auto k = meta.at("panel_size").get<Eigen::Index>();
  const auto m = meta.at("output_dim").get<Eigen::Index>();

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      row.push_back(parse_double(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  if (static_cast<Eigen::Index>(rows.size()) != k || rows.empty()) throw IoError("reference.csv has the wrong row count");
  const auto n = static_cast<Eigen::Index>(rows.front().size()) - 1 - m;
  ref.panel.resize(n, k);
  ref.values.resize(m, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& row = rows[static_cast<std::size_t>(c)];
    if (static_cast<Eigen::Index>(row.size()) != 1 + n + m) throw IoError("reference.csv has a ragged row");
    for (Eigen::Index j = 0; j < n; ++j) ref.panel(j, c) = row[static_cast<std::size_t>(1 + j)];
    for (Eigen::Index j = 0; j < m; ++j) ref.values(j, c) = row[static_cast<std::size_t>(1 + n + j)];
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Replications

std::string_view to_string(Sampler sampler) { return sampler == Sampler::kSmc ? "smc" : "mlsmc"; }

SmcConfig smc_config_at(const ExperimentConfig& config, int level) {
  SmcConfig smc;
  smc.level = level;
  smc.particles = config.smc_particles_at(level);
  smc.alpha = config.alpha;
  smc.mutation = config.mutation();
  smc.scheme = config.resample;
  return smc;
}

MlsmcConfig mlsmc_config_at(const ExperimentConfig& config, const LikelihoodModel& model, int level) {
  MlsmcConfig ml;
  ml.levels = level - config.coarsest_level + 1;
  ml.coarsest_level = config.coarsest_level;
  ml.alpha = config.alpha;
  ml.mutation = config.mutation();
  ml.scheme = config.resample;
  ml.level0_init = config.level0_init;
  ml.min_ess = config.min_ess;
  ml.sample_sizes.assign(static_cast<std::size_t>(ml.levels), 1);
  ml.sample_sizes = allocate_samples(config.mlsmc_budget_at(level), config.effective_beta(), config.gamma,
                                     level_costs(ml, model), config.min_particles);
  return ml;
}

ReplicationResult run_replication(const ExperimentConfig& config, const TaskInstance& task, const Reference& ref,
                                  Sampler sampler, int level, int replication) {
  ReplicationResult out;
  out.sampler = sampler;
  out.level = level;
  out.replication = replication;
  const RngStream rng = RngStream(config.seed, kBenchStream)
                            .child({sampler_tag(sampler), static_cast<std::uint64_t>(level),
                                    static_cast<std::uint64_t>(replication)});
  try {
    Batch estimate;
    if (sampler == Sampler::kSmc) {
      const SmcResult r = run_smc_tempered(*task.model, smc_config_at(config, level), rng);
      estimate = predictive_mean(r.population, *task.model, task.panel);
      out.cost = r.cost;
    } else {
      const MlsmcRun run = run_mlsmc(*task.model, mlsmc_config_at(config, *task.model, level), rng);
      estimate = ml_estimate_batch(run, *task.model, task.panel);
      out.cost = run.cost;
    }
    out.sq_error = (estimate - ref.values).squaredNorm() / static_cast<double>(estimate.size());
    if (!std::isfinite(out.sq_error)) throw DegeneracyError("estimate is not finite");
  } catch (const DegeneracyError& e) {
    out.failed = true;
    out.failure = e.what();
    out.cost = std::numeric_limits<double>::quiet_NaN();
    out.sq_error = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<ReplicationResult> run_replications(const ExperimentConfig& config, const TaskInstance& task,
                                                const Reference& ref) {
  std::vector<Sampler> samplers;
  if (config.samplers != SamplerChoice::kMlsmc) samplers.push_back(Sampler::kSmc);
  if (config.samplers != SamplerChoice::kSmc) samplers.push_back(Sampler::kMlsmc);
  struct Job {
    Sampler sampler;
    int level;
    int replication;
  };
  std::vector<Job> jobs;
  for (Sampler s : samplers) {
    for (int level = config.level_min; level <= config.level_max; ++level) {
      for (int r = 0; r < config.replications; ++r) jobs.push_back({s, level, r});
    }
  }
  std::vector<ReplicationResult> results(jobs.size());
  // longest jobs first keeps workers busy until the end
  std::vector<std::size_t> order(jobs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return jobs[a].level > jobs[b].level; });
  dynamic_for(jobs.size(), resolve_threads(config.threads), [&](std::size_t i) {
    const Job& job = jobs[order[i]];
    results[order[i]] = run_replication(config, task, ref, job.sampler, job.level, job.replication);
  });
  return results;
}

// ---------------------------------------------------------------------------
// Curves

LoglogFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("fit_loglog_slope: x and y differ in length");
  if (x.size() < 3) throw ConfigError("fit_loglog_slope needs at least three points");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DomainError("fit_loglog_slope: values must be finite and positive");
    }
    lx.push_back(std::log2(x[i]));
    ly.push_back(std::log2(y[i]));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_loglog_slope: x values are all equal");
  LoglogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - fit.intercept - fit.slope * lx[i];
    rss += r * r;
  }
  fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  return fit;
}

double MseCurve::cost_at(double mse) const {
  if (!xi || !intercept) throw ConfigError("curve has no fitted line");
  return std::exp2(*intercept - *xi * std::log2(mse));
}

std::vector<MseCurve> build_curves(const ExperimentConfig& config, const std::vector<ReplicationResult>& results) {
  std::vector<MseCurve> curves;
  for (Sampler s : {Sampler::kSmc, Sampler::kMlsmc}) {
    MseCurve curve;
    curve.sampler = s;
    curve.alpha = config.alpha;
    for (int level = config.level_min; level <= config.level_max; ++level) {
      std::vector<double> errors;
      double cost = 0.0;
      int total = 0;
      int failures = 0;
      for (const auto& r : results) {
        if (r.sampler != s || r.level != level) continue;
        ++total;
        if (r.failed) {
          ++failures;
          continue;
        }
        errors.push_back(r.sq_error);
        cost += r.cost;
      }
      if (total == 0) continue;
      CurvePoint p;
      p.level = level;
      p.replications = total;
      p.failures = failures;
      const double n = static_cast<double>(errors.size());
      if (!errors.empty()) {
        p.mean_cost = cost / n;
        p.mse = std::accumulate(errors.begin(), errors.end(), 0.0) / n;
        double ss = 0.0;
        for (double e : errors) ss += (e - p.mse) * (e - p.mse);
        p.mse_se = errors.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
      } else {
        p.mean_cost = p.mse = p.mse_se = std::numeric_limits<double>::quiet_NaN();
      }
      p.p10 = percentile(errors, 0.1);
      p.p90 = percentile(errors, 0.9);
      if (static_cast<double>(failures) > config.max_failure_fraction * static_cast<double>(total)) curve.valid = false;
      curve.points.push_back(p);
    }
    if (curve.points.empty()) continue;
    std::vector<double> mse;
    std::vector<double> cost;
    for (const auto& p : curve.points) {
      if (p.mse > 0.0 && std::isfinite(p.mse)) {
        mse.push_back(p.mse);
        cost.push_back(p.mean_cost);
      }
    }
    if (mse.size() >= 3) {
      try {
        const LoglogFit fit = fit_loglog_slope(mse, cost);
        curve.xi = -fit.slope;
        curve.xi_se = fit.slope_se;
        curve.intercept = fit.intercept;
      } catch (const DomainError&) {
      }
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      const auto& a = curve.points[i - 1];
      const auto& b = curve.points[i];
      if (b.mse > a.mse + 2.0 * std::hypot(a.mse_se, b.mse_se)) curve.monotone = false;
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

const MseCurve* BenchResult::curve(Sampler sampler) const {
  for (const auto& c : curves) {
    if (c.sampler == sampler) return &c;
  }
  return nullptr;
}

BenchResult run_bench(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  if (config.task == Task::kRate) throw ConfigError("the rate task runs through the rate check, not the benchmark");
  const TaskInstance task = make_task(config);
  BenchResult result;
  if (auto loaded = load_reference(out_dir, config)) {
    result.reference = std::move(*loaded);
    result.reference_loaded = true;
  } else {
    result.reference = compute_reference(config, task);
    save_reference(out_dir, result.reference);
  }
  result.replications = run_replications(config, task, result.reference);
  result.curves = build_curves(config, result.replications);
  emit_bench(config, result, out_dir);
  return result;
}

// ---------------------------------------------------------------------------
// Rate check

Vector rate_probe_input(const ExperimentConfig& config) {
  // the first regression panel input: one draw from the input law
  RngStream rng(config.seed, kPanelStream);
  Vector x(config.input_dim);
  const double sd = std::sqrt(config.input_variance);
  for (int j = 0; j < config.input_dim; ++j) x[j] = config.input_mean + sd * rng.normal();
  return x;
}

RateMethod rate_method_for(const ExperimentConfig& config) {
  if (config.rate_method == "explicit") return RateMethod::kExplicit;
  if (config.rate_method == "collapsed") return RateMethod::kCollapsed;
  return config.rate_level_max > 6 ? RateMethod::kCollapsed : RateMethod::kExplicit;
}

std::vector<RateSeries> run_rate_check(const ExperimentConfig& config) {
  config.validate();
  const Vector x = rate_probe_input(config);
  std::vector<RateSeries> series;
  for (double alpha : config.rate_alphas) {
    for (int depth : config.rate_depths) {
      for (Activation act : config.rate_activations) {
        RateSeries s;
        s.alpha = alpha;
        s.depth = depth;
        s.activation = act;
        s.expected_slope = -(2.0 * alpha - 1.0);
        series.push_back(s);
      }
    }
  }
  dynamic_for(series.size(), resolve_threads(config.threads), [&](std::size_t i) {
    RateSeries& s = series[i];
    RateRequest req;
    req.alpha = s.alpha;
    req.depth = s.depth;
    req.activation = s.activation;
    req.level_min = config.rate_level_min;
    req.level_max = config.rate_level_max;
    req.samples_per_level = config.rate_samples;
    req.method = rate_method_for(config);
    const RngStream rng = RngStream(config.seed, kRateStream).child(i);
    s.moments = increment_second_moment(req, x, rng);
    std::vector<double> width;
    std::vector<double> moment;
    for (const auto& m : s.moments) {
      width.push_back(std::exp2(m.level));
      moment.push_back(m.estimate);
    }
    s.fit = fit_loglog_slope(width, moment);
  });
  return series;
}

void write_rate_outputs(const ExperimentConfig& config, const std::vector<RateSeries>& series,
                        const std::filesystem::path& out_dir) {
  std::ostringstream csv;
  csv << "alpha,depth,activation,level,moment,std_error,samples\n";
  for (const auto& s : series) {
    for (const auto& m : s.moments) {
      csv << format_double(s.alpha) << ',' << s.depth << ',' << to_string(s.activation) << ',' << m.level << ','
          << format_double(m.estimate) << ',' << format_double(m.std_error) << ',' << m.samples << '\n';
    }
  }
  std::ostringstream fit;
  fit << "alpha,depth,activation,slope,slope_se,intercept,expected_slope\n";
  for (const auto& s : series) {
    fit << format_double(s.alpha) << ',' << s.depth << ',' << to_string(s.activation) << ',' << format_double(s.fit.slope)
        << ',' << format_double(s.fit.slope_se) << ',' << format_double(s.fit.intercept) << ','
        << format_double(s.expected_slope) << '\n';
  }
  json meta = json::object();
  meta["kind"] = "rate-check";
  meta["config"] = json::parse(config_to_json(config));
  meta["method"] = std::string(to_string(rate_method_for(config)));
  std::vector<double> probe;
  const Vector x = rate_probe_input(config);
  for (Eigen::Index j = 0; j < x.size(); ++j) probe.push_back(x[j]);
  meta["probe_input"] = probe;
  meta["moment"] = "E|f_l(x) - f_{l-1}(x)|^2 under the coupled prior";
  meta["slope_axes"] = "log2 moment against level";
  write_file_atomic(out_dir / "rate.csv", csv.str());
  write_file_atomic(out_dir / "rate_fit.csv", fit.str());
  write_file_atomic(out_dir / "rate.svg", rate_svg(series));
  write_file_atomic(out_dir / "rate.json", meta.dump(2) + "\n");
}

}  // namespace mlbn::bench
