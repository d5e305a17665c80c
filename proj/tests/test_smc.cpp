#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>

#include "mlbn/error.hpp"
#include "mlbn/models.hpp"
#include "mlbn/smc.hpp"

using namespace mlbn;

namespace {

// y_i ~ N(w x_i, s^2) with w the single first-layer weight of a width-1
// network; the other parameters do not enter the likelihood.
class LinearWeightModel final : public LikelihoodModel {
 public:
  LinearWeightModel(Vector x, Vector y, double s) : LikelihoodModel(2, 1, 1, Activation::kTanh), x_(std::move(x)), y_(std::move(y)), s_(s) {}

  double log_lik(const ThetaLevel& theta) const override {
    const double w = theta.weight(0)(0, 0);
    const Vector r = y_ - w * x_;
    return -0.5 * static_cast<double>(x_.size()) * std::log(2.0 * M_PI * s_ * s_) - 0.5 * r.squaredNorm() / (s_ * s_);
  }
  Vector predict(const ThetaLevel& theta, const Vector&) const override { return Vector::Constant(1, theta.weight(0)(0, 0)); }
  std::string_view name() const override { return "linear-weight"; }

  double posterior_mean() const {
    const double precision = 1.0 + x_.squaredNorm() / (s_ * s_);
    return x_.dot(y_) / (s_ * s_) / precision;
  }
  double log_evidence() const {
    const Eigen::Index n = x_.size();
    const Matrix cov = s_ * s_ * Matrix::Identity(n, n) + x_ * x_.transpose();
    const Eigen::LLT<Matrix> llt(cov);
    const Matrix lower = llt.matrixL();
    const double logdet = 2.0 * lower.diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + logdet + y_.dot(llt.solve(y_)));
  }

 private:
  Vector x_;
  Vector y_;
  double s_;
};

LinearWeightModel conjugate_instance() {
  Vector x(6);
  x << 0.3, -1.0, 0.8, 1.5, -0.4, 0.9;
  Vector y(6);
  y << 0.5, -1.7, 1.1, 2.4, -0.2, 1.6;
  return {x, y, 0.5};
}

struct Summary {
  double mean = 0.0;
  double se = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

TEST_CASE("effective sample size") {
  CHECK(ess(std::vector<double>(100, -3.0)) == doctest::Approx(100.0));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(ess({0.0, ninf, ninf, ninf}) == doctest::Approx(1.0));
  CHECK(ess({std::log(0.5), std::log(0.25), std::log(0.25)}) == doctest::Approx(1.0 / 0.375));
  CHECK(ess({1000.0, 1000.0}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(ess({ninf, ninf}), DegeneracyError);
  const auto w = normalize_log_weights({-1.0, 2.0, 0.5, -700.0});
  CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-12);
}

TEST_CASE("multinomial resampling") {
  const NetworkShape shape(2, 1, 1, 0);
  ParticlePopulation pop;
  const std::vector<double> w = {0.5, 0.3, 0.2, 0.0};
  for (std::size_t i = 0; i < w.size(); ++i) {
    ThetaLevel t(shape);
    t.bias(1)[0] = static_cast<double>(i);
    pop.particles.push_back(t);
    pop.log_lik.push_back(0.0);
    pop.log_weights.push_back(std::log(w[i]));
    pop.ancestors.push_back(i);
  }
  RngStream rng(2, 0);

  SUBCASE("expected offspring counts and unbiasedness") {
    const int reps = 10000;
    std::vector<double> counts(4, 0.0);
    std::vector<double> phi_means;
    for (int r = 0; r < reps; ++r) {
      const ParticlePopulation out = resample_multinomial(pop, rng);
      double phi = 0.0;
      for (std::size_t j = 0; j < out.size(); ++j) {
        counts[out.ancestors[j]] += 1.0;
        CHECK(out.particles[j] == pop.particles[out.ancestors[j]]);
        phi += std::sin(out.particles[j].bias(1)[0]) / 4.0;
      }
      phi_means.push_back(phi);
    }
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = 4.0 * w[j];
      const double se = std::sqrt(4.0 * w[j] * (1.0 - w[j]) / reps);
      CHECK(std::abs(counts[j] / reps - expected) <= 3.0 * se + 1e-15);
    }
    double target = 0.0;
    for (std::size_t j = 0; j < 4; ++j) target += w[j] * std::sin(static_cast<double>(j));
    const Summary s = summarize(phi_means);
    CHECK(std::abs(s.mean - target) < 3.0 * s.se);
  }
  SUBCASE("point-mass weights") {
    ParticlePopulation point = pop;
    point.log_weights = {0.0, -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                         -std::numeric_limits<double>::infinity()};
    const ParticlePopulation out = resample(point, 9, rng);
    CHECK(out.size() == 9);
    for (std::size_t a : out.ancestors) CHECK(a == 0);
    for (double lw : out.log_weights) CHECK(lw == 0.0);
  }
  SUBCASE("single particle") {
    ParticlePopulation one;
    one.particles = {pop.particles[2]};
    one.log_lik = {0.0};
    one.log_weights = {-5.0};
    one.ancestors = {0};
    const ParticlePopulation out = resample_multinomial(one, rng);
    CHECK(out.particles[0] == pop.particles[2]);
  }
  SUBCASE("systematic resampling keeps counts within one of P w") {
    const auto idx = resample_indices(w, 10, rng, ResampleScheme::kSystematic);
    std::vector<int> c(4, 0);
    for (auto i : idx) ++c[i];
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(c[j] - 10.0 * w[j]) < 1.0 + 1e-12);
  }
  CHECK(parse_resample_scheme("systematic") == ResampleScheme::kSystematic);
  CHECK_THROWS_AS(parse_resample_scheme("residual"), ConfigError);
}

TEST_CASE("pCN with a flat likelihood preserves the prior") {
  const FlatModel model(3, 2, 1, Activation::kTanh);
  const TnnPrior prior(2.0, model.shape_at(2));
  ThetaLevel theta(prior.shape());
  double ll = 0.0;
  RngStream rng(4, 0);
  const int steps = 10000;
  const int batch = 100;
  // batch means over the squared value of a few entries
  struct Entry {
    int layer;
    int row;
    int col;  // -1 for a bias
    double var;
  };
  const std::vector<Entry> entries = {{0, 0, 0, 1.0}, {0, 3, 1, std::pow(8.0, -2.0)}, {1, 2, 2, std::pow(9.0, -2.0)},
                                      {1, 3, -1, std::pow(4.0, -2.0)}, {2, 0, 3, std::pow(4.0, -2.0)}};
  std::vector<std::vector<double>> batches(entries.size());
  std::vector<double> acc(entries.size(), 0.0);
  int accepted = 0;
  for (int s = 1; s <= steps; ++s) {
    accepted += pcn_move(theta, ll, prior, model, 0.5, 1.0, rng);
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const Entry& en = entries[e];
      const double v = en.col < 0 ? theta.bias(en.layer)[en.row] : theta.weight(en.layer)(en.row, en.col);
      acc[e] += v * v;
    }
    if (s % batch == 0) {
      for (std::size_t e = 0; e < entries.size(); ++e) {
        batches[e].push_back(acc[e] / batch);
        acc[e] = 0.0;
      }
    }
  }
  CHECK(accepted == steps);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Summary s = summarize(batches[e]);
    CHECK(std::abs(s.mean - entries[e].var) < 3.0 * s.se);
  }
}

TEST_CASE("pCN limits") {
  const LinearWeightModel model = conjugate_instance();
  const TnnPrior prior(2.0, model.shape_at(0));
  RngStream rng(6, 0);
  RngStream init(6, 1);
  const ThetaLevel start = sample(prior, init);
  MutationConfig cfg;
  cfg.pcn_rho = 1.0 - 1e-16;
  cfg.validate();
  ThetaLevel state = start;
  double ll = model.log_lik(state);
  for (int i = 0; i < 100; ++i) pcn_move(state, ll, prior, model, 1.0, 1.0, rng);
  const auto a = state.flatten();
  const auto b = start.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

  MutationConfig bad;
  bad.pcn_rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.pcn_rho = 0.5;
  bad.n_steps = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const ThetaLevel moved = pcn_step(start, prior, model, MutationConfig{}, rng);
  CHECK(moved.shape() == start.shape());
}

TEST_CASE("pCN acceptance on the regression task") {
  const RegressionProblem problem = gen_regression({.seed = 1});
  const RegressionModel model(problem.data, Activation::kTanh, 2);
  const TnnPrior prior(2.0, model.shape_at(3));
  RngStream rng(7, 0);
  // start from a posterior-ish state by running a short chain at rho = 0.98
  ThetaLevel theta = sample(prior, rng);
  double ll = model.log_lik(theta);
  int accepted = 0;
  const int steps = 4000;
  for (int i = 0; i < steps; ++i) accepted += pcn_move(theta, ll, prior, model, 0.98, 1.0, rng);
  const double rate = static_cast<double>(accepted) / steps;
  MESSAGE("acceptance at rho 0.98, level 3: " << rate);
  CHECK(rate > 0.0);
  CHECK(rate < 0.95);
}

TEST_CASE("adaptive step size") {
  CHECK(adapt_rho(0.9, 0.25, 0.25) == doctest::Approx(0.9));
  CHECK(adapt_rho(0.9, 0.9, 0.25) < 0.9);
  CHECK(adapt_rho(0.9, 0.01, 0.25) > 0.9);
  CHECK(adapt_rho(0.0, 1.0, 0.25) == 0.0);
}

TEST_CASE("tempered SMC") {
  SUBCASE("flat likelihood") {
    const FlatModel model(2, 1, 1, Activation::kTanh);
    SmcConfig cfg;
    cfg.level = 2;
    cfg.particles = 64;
    const SmcResult r = run_smc_tempered(model, cfg, RngStream(1, 0));
    CHECK(r.stages() == 1);
    CHECK(r.resample_count == 0);
    CHECK(std::abs(r.log_evidence) < 1e-10);
    CHECK(r.acceptance == 1.0);
    for (std::size_t i = 0; i < r.population.size(); ++i) CHECK(r.population.ancestors[i] == i);
    CHECK(r.cost == doctest::Approx(64.0 * 5.0 * static_cast<double>(param_count(model.shape_at(2)))));
  }
  SUBCASE("zero-data model") {
    const LinearWeightModel model(Vector(0), Vector(0), 0.5);
    SmcConfig cfg;
    cfg.level = 1;
    cfg.particles = 16;
    CHECK(std::abs(run_smc_tempered(model, cfg, RngStream(2, 0)).log_evidence) < 1e-10);
  }
  SUBCASE("conjugate Gaussian posterior") {
    const LinearWeightModel model = conjugate_instance();
    SmcConfig cfg;
    cfg.level = 0;
    cfg.particles = 200;
    std::vector<double> means;
    std::vector<double> evidences;
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
      const SmcResult r = run_smc_tempered(model, cfg, RngStream(100 + rep, 0));
      means.push_back(weighted_predictive_mean(r.population, model, Vector::Zero(1))[0]);
      evidences.push_back(std::exp(r.log_evidence - model.log_evidence()));
    }
    const Summary m = summarize(means);
    CHECK(std::abs(m.mean - model.posterior_mean()) < 3.0 * m.se);
    // the evidence estimate itself is unbiased
    const Summary z = summarize(evidences);
    CHECK(std::abs(z.mean - 1.0) < 3.0 * z.se);
  }
  SUBCASE("fixed schedule") {
    const LinearWeightModel model = conjugate_instance();
    SmcConfig cfg;
    cfg.level = 0;
    cfg.particles = 50;
    cfg.schedule = {0.25, 0.5, 1.0};
    const SmcResult r = run_smc_tempered(model, cfg, RngStream(3, 0));
    CHECK(r.temperatures == std::vector<double>{0.25, 0.5, 1.0});
    cfg.schedule = {0.5, 0.4, 1.0};
    CHECK_THROWS_AS(run_smc_tempered(model, cfg, RngStream(3, 0)), ConfigError);
    cfg.schedule = {0.5};
    CHECK_THROWS_AS(run_smc_tempered(model, cfg, RngStream(3, 0)), ConfigError);
    cfg.schedule = {};
    cfg.particles = 1;
    CHECK_THROWS_AS(run_smc_tempered(model, cfg, RngStream(3, 0)), ConfigError);
  }
  SUBCASE("deterministic per seed and independent of thread count") {
    const RegressionProblem problem = gen_regression({.seed = 2, .n_points = 30, .noise_std = 0.5});
    const RegressionModel model(problem.data, Activation::kTanh, 2);
    SmcConfig cfg;
    cfg.level = 2;
    cfg.particles = 40;
    const SmcResult a = run_smc_tempered(model, cfg, RngStream(9, 9));
    cfg.threads = 3;
    const SmcResult b = run_smc_tempered(model, cfg, RngStream(9, 9));
    CHECK(a.log_evidence == b.log_evidence);
    CHECK(a.temperatures == b.temperatures);
    for (std::size_t i = 0; i < a.population.size(); ++i) CHECK(a.population.particles[i] == b.population.particles[i]);
  }
}
