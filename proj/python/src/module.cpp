#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "mlbn/bench/config.hpp"
#include "mlbn/bench/experiment.hpp"
#include "mlbn/error.hpp"
#include "mlbn/mlsmc.hpp"
#include "mlbn/models.hpp"
#include "mlbn/network.hpp"
#include "mlbn/prior.hpp"
#include "mlbn/smc.hpp"

namespace py = pybind11;
using namespace mlbn;

namespace {

NetworkShape shape_of(int depth, int input_dim, int output_dim, int level) {
  return NetworkShape(depth, input_dim, output_dim, level);
}

ThetaLevel theta_from(const NetworkShape& shape, const Vector& flat) {
  return ThetaLevel::unflatten(shape, flat.data(), static_cast<std::size_t>(flat.size()));
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

py::dict curve_dict(const bench::MseCurve& c) {
  py::list points;
  for (const auto& p : c.points) {
    py::dict d;
    d["L"] = p.level;
    d["mean_cost"] = p.mean_cost;
    d["mse"] = p.mse;
    d["mse_se"] = p.mse_se;
    d["replications"] = p.replications;
    d["failures"] = p.failures;
    d["p10"] = p.p10;
    d["p90"] = p.p90;
    points.append(d);
  }
  py::dict out;
  out["sampler"] = std::string(bench::to_string(c.sampler));
  out["points"] = points;
  out["xi"] = c.xi ? py::cast(*c.xi) : py::none();
  out["xi_se"] = c.xi_se ? py::cast(*c.xi_se) : py::none();
  out["valid"] = c.valid;
  out["monotone"] = c.monotone;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multilevel SMC for Bayesian neural networks under trace-class priors";

  py::register_exception<DegeneracyError>(m, "DegeneracyError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ShapeError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const DomainError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    }
  });

  m.def("param_count", [](int depth, int input_dim, int output_dim, int level) {
    return param_count(shape_of(depth, input_dim, output_dim, level));
  }, py::arg("depth"), py::arg("input_dim"), py::arg("output_dim"), py::arg("level"));

  m.def("prior_sample",
        [](double alpha, int depth, int input_dim, int output_dim, int level, std::uint64_t seed, std::uint64_t stream) {
          const TnnPrior prior(alpha, shape_of(depth, input_dim, output_dim, level));
          RngStream rng(seed, stream);
          return to_vector(sample(prior, rng).flatten());
        },
        py::arg("alpha"), py::arg("depth"), py::arg("input_dim"), py::arg("output_dim"), py::arg("level"),
        py::arg("seed"), py::arg("stream") = 0,
        "Flat prior draw: layer by layer, weights row-major then bias.");

  m.def("prior_variances", [](double alpha, int depth, int input_dim, int output_dim, int level) {
    const TnnPrior prior(alpha, shape_of(depth, input_dim, output_dim, level));
    ThetaLevel v(prior.shape());
    for (int k = 0; k < depth; ++k) {
      for (int i = 0; i < v.weight(k).rows(); ++i) {
        for (int j = 0; j < v.weight(k).cols(); ++j) v.weight(k)(i, j) = prior.weight_variance(i + 1, j + 1);
        v.bias(k)[i] = prior.bias_variance(i + 1);
      }
    }
    return to_vector(v.flatten());
  }, py::arg("alpha"), py::arg("depth"), py::arg("input_dim"), py::arg("output_dim"), py::arg("level"));

  m.def("forward",
        [](const Vector& theta, int depth, int input_dim, int output_dim, int level, const std::string& activation,
           const Batch& inputs) {
          const auto shape = shape_of(depth, input_dim, output_dim, level);
          return forward_batch(theta_from(shape, theta), parse_activation(activation), inputs);
        },
        py::arg("theta"), py::arg("depth"), py::arg("input_dim"), py::arg("output_dim"), py::arg("level"),
        py::arg("activation"), py::arg("inputs"), "Network outputs for inputs given as columns.");

  m.def("rl_action_prob", &rl_action_prob, py::arg("values"), py::arg("action"), py::arg("sigma"),
        py::arg("nodes") = 64, "P(action = argmax of values + sigma * noise), 1-based action.");

  m.def("gen_regression",
        [](std::uint64_t seed, int n_points, int input_dim, int depth, int teacher_level, double alpha,
           const std::string& activation, double noise_std, double input_mean, double input_variance) {
          RegressionSpec spec;
          spec.seed = seed;
          spec.n_points = n_points;
          spec.input_dim = input_dim;
          spec.depth = depth;
          spec.teacher_level = teacher_level;
          spec.alpha = alpha;
          spec.activation = parse_activation(activation);
          spec.noise_std = noise_std;
          spec.input_mean = input_mean;
          spec.input_variance = input_variance;
          RegressionProblem p = gen_regression(spec);
          return py::make_tuple(p.data.inputs, p.data.outputs);
        },
        py::arg("seed"), py::arg("n_points") = 200, py::arg("input_dim") = 10, py::arg("depth") = 2,
        py::arg("teacher_level") = 7, py::arg("alpha") = 2.0, py::arg("activation") = "tanh",
        py::arg("noise_std") = 0.01, py::arg("input_mean") = 2.0, py::arg("input_variance") = 0.5,
        "Synthetic regression data (inputs n x N, outputs 1 x N).");

  m.def("posterior_mean",
        [](const Batch& inputs, const Batch& outputs, double noise_std, const Batch& test_inputs,
           const std::string& sampler, int level, std::size_t particles, int coarsest_level, double alpha, int depth,
           const std::string& activation, int n_steps, std::uint64_t seed) {
          RegressionData data{inputs, outputs, Vector::Constant(outputs.rows(), noise_std * noise_std)};
          const RegressionModel model(std::move(data), parse_activation(activation), depth);
          MutationConfig mutation;
          mutation.n_steps = n_steps;
          mutation.adapt_target = 0.25;
          const RngStream rng(seed, 0);
          py::dict out;
          if (sampler == "smc") {
            SmcConfig c;
            c.level = level;
            c.particles = particles;
            c.alpha = alpha;
            c.mutation = mutation;
            const SmcResult r = run_smc_tempered(model, c, rng);
            Batch mean = Batch::Zero(model.output_dim(), test_inputs.cols());
            const auto w = r.population.normalized_weights();
            for (std::size_t i = 0; i < r.population.size(); ++i) {
              mean += w[i] * model.predict_batch(r.population.particles[i], test_inputs);
            }
            out["mean"] = mean;
            out["cost"] = r.cost;
            out["log_evidence"] = r.log_evidence;
            out["stages"] = r.stages();
          } else if (sampler == "mlsmc") {
            MlsmcConfig c;
            c.coarsest_level = coarsest_level;
            c.levels = level - coarsest_level + 1;
            c.alpha = alpha;
            c.mutation = mutation;
            c.level0_init = Level0Init::kTempered;
            c.sample_sizes = allocate_samples(static_cast<double>(particles) * level_costs(c, model).front(),
                                              2.0 * alpha - 1.0, 2.0, level_costs(c, model));
            const MlsmcRun run = run_mlsmc(model, c, rng);
            out["mean"] = ml_estimate_batch(run, model, test_inputs);
            out["cost"] = run.cost;
            out["sample_sizes"] = c.sample_sizes;
          } else {
            throw ConfigError("sampler must be 'smc' or 'mlsmc'");
          }
          return out;
        },
        py::arg("inputs"), py::arg("outputs"), py::arg("noise_std"), py::arg("test_inputs"),
        py::arg("sampler") = "smc", py::arg("level") = 3, py::arg("particles") = 500, py::arg("coarsest_level") = 1,
        py::arg("alpha") = 2.0, py::arg("depth") = 2, py::arg("activation") = "tanh", py::arg("n_steps") = 5,
        py::arg("seed") = 1,
        "Posterior predictive mean for a regression data set. For mlsmc, `particles` scales the budget as if "
        "P_0 were spent on the coarsest level alone.");

  m.def("increment_second_moment",
        [](double alpha, int depth, const std::string& activation, int level_min, int level_max, std::size_t samples,
           const Vector& x, std::uint64_t seed, const std::string& method) {
          RateRequest req;
          req.alpha = alpha;
          req.depth = depth;
          req.activation = parse_activation(activation);
          req.level_min = level_min;
          req.level_max = level_max;
          req.samples_per_level = samples;
          req.method = parse_rate_method(method);
          py::list out;
          for (const auto& mom : increment_second_moment(req, x, RngStream(seed, 0))) {
            out.append(py::make_tuple(mom.level, mom.estimate, mom.std_error));
          }
          return out;
        },
        py::arg("alpha"), py::arg("depth"), py::arg("activation"), py::arg("level_min"), py::arg("level_max"),
        py::arg("samples"), py::arg("x"), py::arg("seed") = 1, py::arg("method") = "explicit",
        "(level, moment, std_error) for each level.");

  m.def("fit_loglog_slope", [](const std::vector<double>& x, const std::vector<double>& y) {
    const auto f = bench::fit_loglog_slope(x, y);
    return py::make_tuple(f.slope, f.intercept, f.slope_se);
  }, py::arg("x"), py::arg("y"), "(slope, intercept, slope_se) of log2 y against log2 x.");

  m.def("allocate_samples", &allocate_samples, py::arg("budget"), py::arg("beta"), py::arg("gamma"),
        py::arg("level_costs"), py::arg("min_particles") = 50);

  m.def("default_config", [] { return bench::config_to_json(bench::ExperimentConfig{}); },
        "Default experiment config as JSON text.");

  m.def("run_bench", [](const std::string& config_json, const std::string& out_dir) {
    const auto config = bench::parse_config(config_json);
    bench::BenchResult r;
    {
      py::gil_scoped_release release;
      r = bench::run_bench(config, out_dir);
    }
    py::list curves;
    for (const auto& c : r.curves) curves.append(curve_dict(c));
    py::dict out;
    out["curves"] = curves;
    out["reference_loaded"] = r.reference_loaded;
    return out;
  }, py::arg("config_json"), py::arg("out_dir"), "Runs the cost-against-MSE benchmark and writes its files.");

  m.def("run_rate_check", [](const std::string& config_json) {
    const auto config = bench::parse_config(config_json);
    std::vector<bench::RateSeries> series;
    {
      py::gil_scoped_release release;
      series = bench::run_rate_check(config);
    }
    py::list out;
    for (const auto& s : series) {
      py::dict d;
      d["alpha"] = s.alpha;
      d["depth"] = s.depth;
      d["activation"] = std::string(to_string(s.activation));
      d["slope"] = s.fit.slope;
      d["slope_se"] = s.fit.slope_se;
      d["expected_slope"] = s.expected_slope;
      py::list moments;
      for (const auto& mom : s.moments) moments.append(py::make_tuple(mom.level, mom.estimate, mom.std_error));
      d["moments"] = moments;
      out.append(d);
    }
    return out;
  }, py::arg("config_json"));
}
