#include "mlbn/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mlbn/error.hpp"

namespace mlbn {

namespace {

// Standard deviation factor i^{-alpha/2} for 1-based i = 1..n.
std::vector<double> index_scales(int n, double alpha) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::pow(static_cast<double>(i + 1), -0.5 * alpha);
  return out;
}

void require_same_shape(const TnnPrior& prior, const ThetaLevel& theta, const char* what) {
  if (!(prior.shape() == theta.shape())) {
    throw ShapeError(std::string(what) + ": parameter shape does not match the prior");
  }
}

inline double gaussian_log_pdf(double value, double variance) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + value * value / variance);
}

}  // namespace

TnnPrior::TnnPrior(double alpha, const NetworkShape& shape, Activation activation)
    : alpha_(alpha), shape_(shape), activation_(activation) {
  if (!(alpha > 0.5) || !std::isfinite(alpha)) {
    throw ConfigError("prior decay exponent alpha must exceed 1/2, got " + std::to_string(alpha));
  }
}

double TnnPrior::weight_variance(int i, int j) const {
  return std::pow(static_cast<double>(i) * static_cast<double>(j), -alpha_);
}

double TnnPrior::bias_variance(int i) const { return std::pow(static_cast<double>(i), -alpha_); }

ThetaLevel sample(const TnnPrior& prior, RngStream& rng) {
  const NetworkShape& shape = prior.shape();
  ThetaLevel theta(shape);
  const int widest = std::max({shape.input_dim(), shape.output_dim(), shape.hidden_width()});
  const std::vector<double> scale = index_scales(widest, prior.alpha());
  for (int k = 0; k < shape.depth(); ++k) {
    Matrix& w = theta.weight(k);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = scale[static_cast<std::size_t>(r)] * scale[static_cast<std::size_t>(c)] * rng.normal();
      }
    }
    Vector& b = theta.bias(k);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = scale[static_cast<std::size_t>(r)] * rng.normal();
  }
  return theta;
}

ThetaLevel extend(const TnnPrior& fine, const ThetaLevel& coarse, RngStream& rng) {
  const NetworkShape& fs = fine.shape();
  const NetworkShape& cs = coarse.shape();
  if (cs.level() + 1 != fs.level() || cs.depth() != fs.depth() || cs.input_dim() != fs.input_dim() ||
      cs.output_dim() != fs.output_dim()) {
    throw ShapeError("extend: coarse parameters at level " + std::to_string(cs.level()) +
                     " cannot be extended to level " + std::to_string(fs.level()));
  }
  ThetaLevel theta(fs);
  const int widest = std::max({fs.input_dim(), fs.output_dim(), fs.hidden_width()});
  const std::vector<double> scale = index_scales(widest, fine.alpha());
  for (int k = 0; k < fs.depth(); ++k) {
    const Eigen::Index shared_rows = cs.rows(k);
    const Eigen::Index shared_cols = cs.cols(k);
    Matrix& w = theta.weight(k);
    const Matrix& wc = coarse.weight(k);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = (r < shared_rows && c < shared_cols)
                      ? wc(r, c)
                      : scale[static_cast<std::size_t>(r)] * scale[static_cast<std::size_t>(c)] * rng.normal();
      }
    }
    Vector& b = theta.bias(k);
    const Vector& bc = coarse.bias(k);
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      b[r] = r < shared_rows ? bc[r] : scale[static_cast<std::size_t>(r)] * rng.normal();
    }
  }
  return theta;
}

namespace {

// Sums log densities over entries; `skip_rows/skip_cols` (per layer) mark a
// leading block to leave out.
double sum_log_density(const TnnPrior& prior, const ThetaLevel& theta, const NetworkShape* skip) {
  const NetworkShape& shape = theta.shape();
  double total = 0.0;
  for (int k = 0; k < shape.depth(); ++k) {
    const Eigen::Index skip_rows = skip ? skip->rows(k) : 0;
    const Eigen::Index skip_cols = skip ? skip->cols(k) : 0;
    const Matrix& w = theta.weight(k);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (r < skip_rows && c < skip_cols) continue;
        total += gaussian_log_pdf(w(r, c), prior.weight_variance(static_cast<int>(r + 1), static_cast<int>(c + 1)));
      }
    }
    const Vector& b = theta.bias(k);
    for (Eigen::Index r = skip_rows; r < b.size(); ++r) {
      total += gaussian_log_pdf(b[r], prior.bias_variance(static_cast<int>(r + 1)));
    }
  }
  return total;
}

}  // namespace

double log_density(const TnnPrior& prior, const ThetaLevel& theta) {
  require_same_shape(prior, theta, "log_density");
  return sum_log_density(prior, theta, nullptr);
}

double log_increment_density(const TnnPrior& prior, const ThetaLevel& theta) {
  require_same_shape(prior, theta, "log_increment_density");
  if (theta.level() < 1) throw ShapeError("log_increment_density: level 0 has no coarser level");
  const NetworkShape coarse = theta.shape().at_level(theta.level() - 1);
  return sum_log_density(prior, theta, &coarse);
}

RateMethod parse_rate_method(std::string_view name) {
  if (name == "explicit") return RateMethod::kExplicit;
  if (name == "collapsed") return RateMethod::kCollapsed;
  throw ConfigError("unknown rate method '" + std::string(name) + "' (expected explicit or collapsed)");
}

std::string_view to_string(RateMethod method) {
  return method == RateMethod::kExplicit ? "explicit" : "collapsed";
}

namespace {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  double std_error() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

double explicit_increment(const RateRequest& req, const Vector& x, int level, RngStream& rng) {
  const NetworkShape fine_shape(req.depth, static_cast<int>(x.size()), req.output_dim, level);
  const TnnPrior fine(req.alpha, fine_shape, req.activation);
  const TnnPrior coarse = fine.at_level(level - 1);
  const ThetaLevel theta_c = sample(coarse, rng);
  const ThetaLevel theta_f = extend(fine, theta_c, rng);
  return (forward(theta_f, req.activation, x) - forward(theta_c, req.activation, x)).squaredNorm();
}

// Samples (f_l(x), f_{l-1}(x)) layer by layer. Each hidden unit's
// pre-activation is a weighted sum of independent Gaussians given the
// previous layer, so only the row-independent sums are needed. Fine
// values are carried as coarse + difference to avoid cancellation when
// the increment is tiny.
class CollapsedSampler {
 public:
  CollapsedSampler(const RateRequest& req, const Vector& x, int level)
      : req_(req), n_fine_(1 << level), n_coarse_(1 << (level - 1)) {
    const int widest = std::max(n_fine_, req.output_dim);
    row_var_.resize(static_cast<std::size_t>(widest));
    for (int i = 0; i < widest; ++i) row_var_[static_cast<std::size_t>(i)] = std::pow(i + 1.0, -req.alpha);
    input_sum_ = 1.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) input_sum_ += std::pow(j + 1.0, -req.alpha) * x[j] * x[j];
    h_coarse_.resize(static_cast<std::size_t>(widest));
    h_diff_.resize(static_cast<std::size_t>(widest));
  }

  double draw(RngStream& rng) {
    // First layer: rows shared up to n_coarse, new beyond; no fine/coarse
    // difference on shared rows because the input is common.
    int rows_fine = n_fine_;
    int rows_coarse = n_coarse_;
    for (int i = 0; i < rows_fine; ++i) {
      const double h = std::sqrt(row_var_[idx(i)] * input_sum_) * rng.normal();
      if (i < rows_coarse) {
        h_coarse_[idx(i)] = h;
        h_diff_[idx(i)] = 0.0;
      } else {
        h_coarse_[idx(i)] = 0.0;
        h_diff_[idx(i)] = h;  // fine-only unit
      }
    }
    for (int layer = 1; layer < req_.depth; ++layer) {
      // Activations; j < rows_coarse are shared units, the rest fine-only.
      double a = 1.0;   // sum w_j (s^c_j)^2 + 1
      double b = 0.0;   // sum w_j s^c_j d_j
      double c = 0.0;   // sum w_j d_j^2 over shared units
      double tail = 0.0;  // sum w_j (s^f_j)^2 over fine-only units
      for (int j = 0; j < rows_fine; ++j) {
        const double w = row_var_[idx(j)];
        if (j < rows_coarse) {
          const double sc = activate(req_.activation, h_coarse_[idx(j)]);
          const double sf = activate(req_.activation, h_coarse_[idx(j)] + h_diff_[idx(j)]);
          const double d = sf - sc;
          a += w * sc * sc;
          b += w * sc * d;
          c += w * d * d;
        } else {
          const double sf = activate(req_.activation, h_diff_[idx(j)]);
          tail += w * sf * sf;
        }
      }
      const bool last = layer == req_.depth - 1;
      const int next_fine = last ? req_.output_dim : n_fine_;
      const int next_coarse = last ? req_.output_dim : n_coarse_;
      const double cond = std::max(0.0, c + tail - b * b / a);
      const double fine_sum = a + 2.0 * b + c + tail;
      for (int i = 0; i < next_fine; ++i) {
        const double v = row_var_[idx(i)];
        if (i < next_coarse) {
          const double hc = std::sqrt(v * a) * rng.normal();
          const double dh = hc * (b / a) + std::sqrt(v * cond) * rng.normal();
          h_coarse_[idx(i)] = hc;
          h_diff_[idx(i)] = dh;
        } else {
          h_coarse_[idx(i)] = 0.0;
          h_diff_[idx(i)] = std::sqrt(v * fine_sum) * rng.normal();
        }
      }
      rows_fine = next_fine;
      rows_coarse = next_coarse;
    }
    double sq = 0.0;
    for (int i = 0; i < req_.output_dim; ++i) sq += h_diff_[idx(i)] * h_diff_[idx(i)];
    return sq;
  }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

  const RateRequest& req_;
  int n_fine_;
  int n_coarse_;
  double input_sum_ = 1.0;
  std::vector<double> row_var_;
  std::vector<double> h_coarse_, h_diff_;
};

}  // namespace

std::vector<IncrementMoment> increment_second_moment(const RateRequest& req, const Vector& x, RngStream rng) {
  if (!(req.alpha > 0.5)) throw ConfigError("rate harness requires alpha > 1/2");
  if (req.level_min < 1 || req.level_max < req.level_min) throw ConfigError("rate harness: invalid level range");
  if (req.depth < 2) throw ConfigError("rate harness: depth must be at least 2");
  if (req.samples_per_level < 2) throw ConfigError("rate harness: need at least two samples per level");
  if (x.size() < 1 || !x.allFinite()) throw DomainError("rate harness: probe input must be finite and non-empty");

  std::vector<IncrementMoment> out;
  for (int level = req.level_min; level <= req.level_max; ++level) {
    Welford acc;
    const RngStream level_rng = rng.child(static_cast<std::uint64_t>(level));
    if (req.method == RateMethod::kExplicit) {
      for (std::size_t s = 0; s < req.samples_per_level; ++s) {
        RngStream sample_rng = level_rng.child(s);
        acc.add(explicit_increment(req, x, level, sample_rng));
      }
    } else {
      CollapsedSampler sampler(req, x, level);
      for (std::size_t s = 0; s < req.samples_per_level; ++s) {
        RngStream sample_rng = level_rng.child(s);
        acc.add(sampler.draw(sample_rng));
      }
    }
    out.push_back({level, acc.mean, acc.std_error(), acc.n});
  }
  return out;
}

}  // namespace mlbn
