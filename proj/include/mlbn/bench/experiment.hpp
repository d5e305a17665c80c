#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlbn/bench/config.hpp"
#include "mlbn/models.hpp"

namespace mlbn::bench {

/// Model plus the fixed panel of test inputs the MSE is averaged over.
struct TaskInstance {
  std::unique_ptr<LikelihoodModel> model;
  Batch panel;  // input_dim x panel_size
};

TaskInstance make_task(const ExperimentConfig& config);

struct Reference {
  Batch panel;
  Batch values;  // output_dim x panel_size
  int level = 0;
  std::size_t particles = 0;
  std::size_t stages = 0;
  double cost = 0.0;
  std::uint64_t fingerprint = 0;  // of the config fields it depends on
  std::uint64_t checksum = 0;     // FNV-1a of the reference CSV bytes
};

/// Digest of the config fields a reference depends on.
std::uint64_t reference_fingerprint(const ExperimentConfig& config);

/// Tempered SMC at reference_level with effective_reference_particles().
Reference compute_reference(const ExperimentConfig& config, const TaskInstance& task);

/// Mean squared shift of the predictive means when the reference is rerun
/// with twice the particles on an independent stream.
double reference_self_check(const ExperimentConfig& config, const TaskInstance& task, const Reference& ref);

/// Named random stream ids derived from the master seed.
std::map<std::string, std::uint64_t> stream_tags();

std::string reference_csv(const Reference& ref);
void save_reference(const std::filesystem::path& dir, const Reference& ref);
/// Loads dir/reference.csv when its metadata matches `config`; verifies the
/// checksum and throws IoError on a mismatch.
std::optional<Reference> load_reference(const std::filesystem::path& dir, const ExperimentConfig& config);

enum class Sampler { kSmc, kMlsmc };
std::string_view to_string(Sampler sampler);

/// One replication of one sampler at one finest level L.
struct ReplicationResult {
  Sampler sampler = Sampler::kSmc;
  int level = 0;
  int replication = 0;
  bool failed = false;
  double cost = 0.0;
  double sq_error = 0.0;  // mean over panel inputs and output coordinates
  std::string failure;
};

MlsmcConfig mlsmc_config_at(const ExperimentConfig& config, const LikelihoodModel& model, int level);
SmcConfig smc_config_at(const ExperimentConfig& config, int level);

ReplicationResult run_replication(const ExperimentConfig& config, const TaskInstance& task, const Reference& ref,
                                  Sampler sampler, int level, int replication);

/// All replications for every configured sampler and level, in the fixed
/// order (sampler, L, replication) regardless of thread count.
std::vector<ReplicationResult> run_replications(const ExperimentConfig& config, const TaskInstance& task,
                                                const Reference& ref);

struct LoglogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// OLS on (log2 x, log2 y). Needs >= 3 points, all positive.
LoglogFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct CurvePoint {
  int level = 0;
  double mean_cost = 0.0;
  double mse = 0.0;
  double mse_se = 0.0;
  int replications = 0;
  int failures = 0;
  double p10 = 0.0;  // replication percentiles of sq_error
  double p90 = 0.0;
};

struct MseCurve {
  Sampler sampler = Sampler::kSmc;
  double alpha = 0.0;
  std::vector<CurvePoint> points;
  // cost ~ MSE^-xi, fitted on log cost vs log MSE; absent below 3 points
  std::optional<double> xi;
  std::optional<double> xi_se;
  std::optional<double> intercept;
  bool valid = true;  // false when a point has more than the allowed failures
  bool monotone = true;  // MSE non-increasing in L within 2 standard errors

  /// Cost the fitted line assigns to `mse`.
  double cost_at(double mse) const;
};

std::vector<MseCurve> build_curves(const ExperimentConfig& config, const std::vector<ReplicationResult>& results);

struct BenchResult {
  Reference reference;
  std::vector<ReplicationResult> replications;
  std::vector<MseCurve> curves;
  bool reference_loaded = false;

  const MseCurve* curve(Sampler sampler) const;
};

/// generate -> reference (reused from `out_dir` when it matches) ->
/// replications -> curves -> files in `out_dir`.
BenchResult run_bench(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Strong-rate check

struct RateSeries {
  double alpha = 0.0;
  int depth = 0;
  Activation activation = Activation::kTanh;
  std::vector<IncrementMoment> moments;
  LoglogFit fit;  // log2 moment against level (x is 2^level)
  double expected_slope = 0.0;
};

Vector rate_probe_input(const ExperimentConfig& config);
RateMethod rate_method_for(const ExperimentConfig& config);
std::vector<RateSeries> run_rate_check(const ExperimentConfig& config);
void write_rate_outputs(const ExperimentConfig& config, const std::vector<RateSeries>& series,
                        const std::filesystem::path& out_dir);

}  // namespace mlbn::bench
