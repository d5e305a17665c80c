// mlbn: rate checks, references, cost-vs-MSE benchmarks and plots.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mlbn/bench/config.hpp"
#include "mlbn/bench/emit.hpp"
#include "mlbn/bench/experiment.hpp"
#include "mlbn/data_io.hpp"
#include "mlbn/error.hpp"

namespace {

using namespace mlbn;
using namespace mlbn::bench;

constexpr int kExitConfig = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitIo = 1;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "flat JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--threads", opts.threads, "worker threads (0 = all); MLBN_THREADS takes precedence");
  cmd->add_option("--set", opts.overrides, "override a config field, key=value (value parsed as JSON when possible)");
}

ExperimentConfig resolve_config(const CommonOptions& opts) {
  nlohmann::ordered_json doc = opts.config_path.empty()
                                   ? nlohmann::ordered_json::object()
                                   : nlohmann::ordered_json::parse(config_to_json(load_config(opts.config_path)));
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    auto parsed = nlohmann::ordered_json::parse(value, nullptr, false);
    doc[key] = parsed.is_discarded() ? nlohmann::ordered_json(value) : parsed;
  }
  ExperimentConfig config = parse_config(doc.dump());
  if (opts.seed) config.seed = *opts.seed;
  if (!opts.out.empty()) config.output_dir = opts.out;
  if (opts.threads) config.threads = *opts.threads;
  if (const char* env = std::getenv("MLBN_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      config.threads = n;
    } catch (const std::exception&) {
      throw ConfigError(std::string("MLBN_THREADS must be an integer, got '") + env + "'");
    }
  }
  config.validate();
  return config;
}

std::filesystem::path prepare_out(const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const auto probe = dir / ".mlbn-write-probe";
  std::FILE* f = std::fopen(probe.c_str(), "w");
  if (!f) throw IoError("output directory '" + dir.string() + "' is not writable");
  std::fclose(f);
  std::filesystem::remove(probe, ec);
  return dir;
}

int cmd_rate_check(const CommonOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const auto dir = prepare_out(config);
  const auto series = run_rate_check(config);
  write_rate_outputs(config, series, dir);
  std::printf("%-6s %-3s %-5s %9s %9s %9s\n", "alpha", "D", "act", "slope", "se", "expected");
  for (const auto& s : series) {
    std::printf("%-6.2f %-3d %-5s %9.3f %9.3f %9.3f\n", s.alpha, s.depth, std::string(to_string(s.activation)).c_str(),
                s.fit.slope, s.fit.slope_se, s.expected_slope);
  }
  std::printf("wrote %s\n", (dir / "rate.csv").c_str());
  return 0;
}

int cmd_reference(const CommonOptions& opts, bool self_check) {
  const ExperimentConfig config = resolve_config(opts);
  if (config.task == Task::kRate) throw ConfigError("the rate task has no reference");
  const auto dir = prepare_out(config);
  const TaskInstance task = make_task(config);
  Reference ref;
  if (auto loaded = load_reference(dir, config)) {
    ref = std::move(*loaded);
    std::printf("reference up to date in %s\n", dir.c_str());
  } else {
    ref = compute_reference(config, task);
    save_reference(dir, ref);
    std::printf("reference level %d (width %d), %zu particles, %zu stages\n", ref.level, 1 << ref.level, ref.particles,
                ref.stages);
  }
  std::printf("checksum %016llx\n", static_cast<unsigned long long>(ref.checksum));
  if (self_check) {
    const double shift = reference_self_check(config, task, ref);
    nlohmann::ordered_json out = {{"doubled_particles", 2 * ref.particles}, {"mean_squared_shift", shift}};
    write_file_atomic(dir / "reference_check.json", out.dump(2) + "\n");
    std::printf("doubled-budget shift (mean squared) %.3e\n", shift);
  }
  return 0;
}

int cmd_bench(const CommonOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const auto dir = prepare_out(config);
  const BenchResult result = run_bench(config, dir);
  std::printf("reference %s\n", result.reference_loaded ? "reused" : "computed");
  bool degenerate = false;
  for (const auto& c : result.curves) {
    std::printf("%s\n", std::string(to_string(c.sampler)).c_str());
    std::printf("  %-3s %12s %12s %12s %5s\n", "L", "cost", "mse", "mse_se", "fail");
    for (const auto& p : c.points) {
      std::printf("  %-3d %12.4e %12.4e %12.4e %2d/%-2d\n", p.level, p.mean_cost, p.mse, p.mse_se, p.failures,
                  p.replications);
    }
    if (c.xi) std::printf("  xi %.3f (se %.3f)\n", *c.xi, *c.xi_se);
    if (!c.valid) {
      std::printf("  curve invalid: more than %.0f%% failed replications at some level\n",
                  100.0 * config.max_failure_fraction);
      degenerate = true;
    }
  }
  std::printf("wrote %s\n", (dir / "bench.csv").c_str());
  return degenerate ? kExitDegenerate : 0;
}

int cmd_plot(const CommonOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const std::filesystem::path dir(config.output_dir);
  replot(dir);
  std::printf("wrote %s\n", (dir / "plot.svg").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel SMC for Bayesian neural networks under trace-class priors"};
  app.require_subcommand(1);
  CommonOptions opts;
  bool self_check = false;
  auto* rate = app.add_subcommand("rate-check", "increment second moment against level");
  auto* reference = app.add_subcommand("reference", "compute or verify the reference solution");
  auto* bench = app.add_subcommand("bench", "cost against MSE for SMC and MLSMC");
  auto* plot = app.add_subcommand("plot", "redraw plot.svg from curve.csv");
  for (auto* cmd : {rate, reference, bench, plot}) add_common(cmd, opts);
  reference->add_flag("--self-check", self_check, "rerun with twice the particles and report the shift");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*rate) return cmd_rate_check(opts);
    if (*reference) return cmd_reference(opts, self_check);
    if (*bench) return cmd_bench(opts);
    if (*plot) return cmd_plot(opts);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DegeneracyError& e) {
    std::cerr << "degenerate run: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
