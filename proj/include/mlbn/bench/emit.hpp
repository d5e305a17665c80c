#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mlbn/bench/experiment.hpp"

namespace mlbn::bench {

// bench.csv: sampler,L,alpha,replication,cost,sq_error (failed runs carry nan)
std::string bench_csv(const ExperimentConfig& config, const std::vector<ReplicationResult>& results);

// curve.csv: sampler,L,alpha,mean_cost,mse,mse_se,replications,failures,p10,p90
std::string curve_csv(const std::vector<MseCurve>& curves);
std::vector<MseCurve> parse_curve_csv(const std::string& text);

/// Log-log cost against MSE with one polyline per sampler, 10/90 percentile
/// bars, and a guide of slope -1.
std::string curve_svg(const std::vector<MseCurve>& curves, const std::string& title);

std::string rate_svg(const std::vector<RateSeries>& series);

std::string bench_metadata_json(const ExperimentConfig& config, const BenchResult& result);

/// Writes bench.csv, curve.csv, plot.svg and metadata.json into `dir`.
void emit_bench(const ExperimentConfig& config, const BenchResult& result, const std::filesystem::path& dir);

/// Rebuilds plot.svg from curve.csv in `dir`.
void replot(const std::filesystem::path& dir);

}  // namespace mlbn::bench
