#include "mlbn/network.hpp"

#include <algorithm>
#include <string>

#include "mlbn/error.hpp"

namespace mlbn {

Activation parse_activation(std::string_view name) {
  if (name == "relu" || name == "ReLU") return Activation::kReLU;
  if (name == "tanh" || name == "Tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::string_view to_string(Activation act) { return act == Activation::kReLU ? "relu" : "tanh"; }

NetworkShape::NetworkShape(int depth, int input_dim, int output_dim, int level)
    : depth_(depth), input_dim_(input_dim), output_dim_(output_dim), level_(level) {
  if (depth < 2) throw ShapeError("network depth must be at least 2");
  if (input_dim < 1 || output_dim < 1) throw ShapeError("input and output dimensions must be positive");
  if (level < 0 || level > 20) throw ShapeError("level must lie in [0, 20]");
}

std::size_t param_count(const NetworkShape& shape) {
  std::size_t total = 0;
  for (int k = 0; k < shape.depth(); ++k) {
    const auto r = static_cast<std::size_t>(shape.rows(k));
    const auto c = static_cast<std::size_t>(shape.cols(k));
    total += r * c + r;
  }
  return total;
}

ThetaLevel::ThetaLevel(const NetworkShape& shape) : shape_(shape) {
  weights_.reserve(static_cast<std::size_t>(shape.depth()));
  biases_.reserve(static_cast<std::size_t>(shape.depth()));
  for (int k = 0; k < shape.depth(); ++k) {
    weights_.push_back(Matrix::Zero(shape.rows(k), shape.cols(k)));
    biases_.push_back(Vector::Zero(shape.rows(k)));
  }
}

bool ThetaLevel::all_finite() const {
  for (int k = 0; k < depth(); ++k) {
    if (!weight(k).allFinite() || !bias(k).allFinite()) return false;
  }
  return true;
}

std::vector<double> ThetaLevel::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (int k = 0; k < depth(); ++k) {
    const Matrix& w = weight(k);
    out.insert(out.end(), w.data(), w.data() + w.size());
    const Vector& b = bias(k);
    out.insert(out.end(), b.data(), b.data() + b.size());
  }
  return out;
}

ThetaLevel ThetaLevel::unflatten(const NetworkShape& shape, const double* values, std::size_t count) {
  ThetaLevel theta(shape);
  if (count != theta.size()) {
    throw ShapeError("flat parameter vector has " + std::to_string(count) + " entries, expected " +
                     std::to_string(theta.size()));
  }
  for (int k = 0; k < shape.depth(); ++k) {
    Matrix& w = theta.weight(k);
    std::copy_n(values, w.size(), w.data());
    values += w.size();
    Vector& b = theta.bias(k);
    std::copy_n(values, b.size(), b.data());
    values += b.size();
  }
  return theta;
}

ThetaLevel ThetaLevel::restrict_to(int coarse_level) const {
  if (coarse_level > level() || coarse_level < 0) {
    throw ShapeError("cannot restrict level " + std::to_string(level()) + " to level " +
                     std::to_string(coarse_level));
  }
  const NetworkShape coarse_shape = shape_.at_level(coarse_level);
  ThetaLevel out(coarse_shape);
  for (int k = 0; k < depth(); ++k) {
    const int r = coarse_shape.rows(k);
    const int c = coarse_shape.cols(k);
    out.weight(k) = weight(k).topLeftCorner(r, c);
    out.bias(k) = bias(k).head(r);
  }
  return out;
}

bool ThetaLevel::operator==(const ThetaLevel& other) const {
  if (!(shape_ == other.shape_)) return false;
  for (int k = 0; k < depth(); ++k) {
    if (weight(k) != other.weight(k) || bias(k) != other.bias(k)) return false;
  }
  return true;
}

namespace {

void apply_activation(Activation act, Eigen::Ref<Batch> z) {
  if (act == Activation::kReLU) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

}  // namespace

Vector forward(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Vector>& x) {
  const NetworkShape& shape = theta.shape();
  if (x.size() != shape.input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(shape.input_dim()));
  }
  if (!x.allFinite()) throw DomainError("forward: non-finite input");

  Vector h = theta.weight(0) * x + theta.bias(0);
  for (int k = 1; k < shape.depth(); ++k) {
    for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = activate(act, h[i]);
    h = theta.weight(k) * h + theta.bias(k);
  }
  return h;
}

Batch forward_batch(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Batch>& inputs) {
  const NetworkShape& shape = theta.shape();
  if (inputs.rows() != shape.input_dim()) {
    throw ShapeError("batch rows " + std::to_string(inputs.rows()) + " != network input_dim " +
                     std::to_string(shape.input_dim()));
  }
  Batch h = theta.weight(0) * inputs;
  h.colwise() += theta.bias(0);
  for (int k = 1; k < shape.depth(); ++k) {
    apply_activation(act, h);
    Batch next = theta.weight(k) * h;
    next.colwise() += theta.bias(k);
    h.swap(next);
  }
  return h;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

Vector log_softmax(const Eigen::Ref<const Vector>& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

Vector softmax_predict(const ThetaLevel& theta, Activation act, const Eigen::Ref<const Vector>& x) {
  return softmax(forward(theta, act, x));
}

bool embed_check(const ThetaLevel& coarse, const ThetaLevel& fine) {
  const NetworkShape& cs = coarse.shape();
  const NetworkShape& fs = fine.shape();
  if (cs.depth() != fs.depth() || cs.input_dim() != fs.input_dim() || cs.output_dim() != fs.output_dim()) {
    throw ShapeError("embed_check: architectures differ beyond hidden width");
  }
  if (fs.level() != cs.level() + 1) {
    throw ShapeError("embed_check: fine level " + std::to_string(fs.level()) + " is not coarse level " +
                     std::to_string(cs.level()) + " + 1");
  }
  for (int k = 0; k < cs.depth(); ++k) {
    const int r = cs.rows(k);
    const int c = cs.cols(k);
    if (fine.weight(k).topLeftCorner(r, c) != coarse.weight(k)) return false;
    if (fine.bias(k).head(r) != coarse.bias(k)) return false;
  }
  return true;
}

}  // namespace mlbn
