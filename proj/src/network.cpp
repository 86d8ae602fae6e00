#include "quadembed/network.hpp"

#include <cmath>

#include "quadembed/errors.hpp"

namespace qde::nn {

std::string to_string(Activation a) { return a == Activation::elu ? "elu" : "identity"; }

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

LatentNormLayer::LatentNormLayer(Eigen::Index dim, double momentum_, double epsilon_)
    : running_mean(Vector::Zero(dim)),
      running_var(Vector::Ones(dim)),
      momentum(momentum_),
      epsilon(epsilon_) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("norm momentum must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("norm epsilon must be positive");
}

Network::Network(std::vector<DenseLayer> layers, std::optional<LatentNormLayer> norm)
    : layers_(std::move(layers)), norm_(std::move(norm)) {
  if (layers_.empty()) throw DimensionError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != l.out() || l.bias.cols() != 1) {
      throw DimensionError("layer " + std::to_string(i) + ": bias shape mismatch");
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw DimensionError("layer " + std::to_string(i) + ": input width does not chain");
    }
  }
  if (norm_ && norm_->dim() != output_dim()) {
    throw DimensionError("norm layer width differs from network output");
  }
}

Eigen::Index Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }
Eigen::Index Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }

void Network::set_mode(NormMode mode) {
  if (norm_) norm_->mode = mode;
}

ParameterSet Network::parameters(const std::string& prefix) {
  ParameterSet set;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    set.add(base + ".weight", layers_[i].weights);
    // Standardization cancels the bias feeding it; it stays fixed.
    if (norm_ && i + 1 == layers_.size()) continue;
    set.add(base + ".bias", layers_[i].bias);
  }
  return set;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  if (norm_) n -= static_cast<std::size_t>(layers_.back().bias.size());
  return n;
}

Network init_network(const NetworkSpec& spec, Rng& rng) {
  if (spec.widths.size() < 2) throw ConfigError("network spec needs at least two widths");
  for (int w : spec.widths) {
    if (w <= 0) throw ConfigError("network widths must be positive");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    const int fan_in = spec.widths[i];
    const int fan_out = spec.widths[i + 1];
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-s, s);
    }
    layer.bias = Matrix::Zero(fan_out, 1);
    layer.activation = (i + 2 == spec.widths.size()) ? spec.output : spec.hidden;
    layers.push_back(std::move(layer));
  }
  std::optional<LatentNormLayer> norm;
  if (spec.latent_norm) norm.emplace(spec.widths.back(), spec.momentum, spec.epsilon);
  return Network(std::move(layers), std::move(norm));
}

namespace {

void check_input(const Network& net, Eigen::Index width) {
  if (width != net.input_dim()) {
    throw DimensionError("batch width " + std::to_string(width) + " != network input " +
                         std::to_string(net.input_dim()));
  }
}

Matrix dense_stack(const Network& net, const Matrix& batch) {
  Matrix h = batch;
  for (const auto& layer : net.layers()) {
    Matrix next = h * layer.weights.transpose();
    next.rowwise() += layer.bias.col(0).transpose();
    if (layer.activation == Activation::elu) {
      next = next.unaryExpr([](double v) { return elu(v); });
    }
    h = std::move(next);
  }
  return h;
}

void update_running(LatentNormLayer& norm, const Vector& mean, const Vector& var) {
  norm.running_mean = (1.0 - norm.momentum) * norm.running_mean + norm.momentum * mean;
  norm.running_var = (1.0 - norm.momentum) * norm.running_var + norm.momentum * var;
  norm.running_var = norm.running_var.cwiseMax(norm.epsilon);
}

}  // namespace

Matrix forward(Network& net, const Matrix& batch) {
  check_input(net, batch.cols());
  Matrix h = dense_stack(net, batch);
  if (!net.norm()) return h;
  auto& norm = *net.norm();
  if (norm.mode == NormMode::train) {
    Tape tape;
    Vector mean, var;
    Var y = batch_standardize(tape.constant(std::move(h)), norm.epsilon, &mean, &var);
    update_running(norm, mean, var);
    return y.value();
  }
  return predict(net, batch);
}

Matrix predict(const Network& net, const Matrix& batch) {
  check_input(net, batch.cols());
  Matrix h = dense_stack(net, batch);
  if (!net.norm()) return h;
  const auto& norm = *net.norm();
  const Vector inv_std = (norm.running_var.array() + norm.epsilon).rsqrt().matrix();
  h.rowwise() -= norm.running_mean.transpose();
  return h * inv_std.asDiagonal();
}

Var forward(Tape& tape, Network& net, const Var& batch) {
  check_input(net, batch.cols());
  Var h = batch;
  for (auto& layer : net.layers()) {
    h = linear(h, tape.parameter(layer.weights), tape.parameter(layer.bias));
    if (layer.activation == Activation::elu) h = elu(h);
  }
  if (!net.norm()) return h;
  auto& norm = *net.norm();
  if (norm.mode == NormMode::train) {
    Vector mean, var;
    Var y = batch_standardize(h, norm.epsilon, &mean, &var);
    update_running(norm, mean, var);
    return y;
  }
  Vector inv_std = (norm.running_var.array() + norm.epsilon).rsqrt().matrix();
  Var centered = add_row(h, tape.constant(-norm.running_mean));
  return matmul(centered, tape.constant(inv_std.asDiagonal().toDenseMatrix()));
}

void calibrate_norm(Network& net, const Matrix& data) {
  if (!net.norm()) return;
  check_input(net, data.cols());
  if (data.rows() < 2) throw DimensionError("calibration needs at least two rows");
  const Matrix h = dense_stack(net, data);
  auto& norm = *net.norm();
  norm.running_mean = h.colwise().mean().transpose();
  const Matrix centered = h.rowwise() - norm.running_mean.transpose();
  norm.running_var = (centered.colwise().squaredNorm().transpose() / static_cast<double>(h.rows()))
                         .cwiseMax(norm.epsilon);
}

}  // namespace qde::nn
