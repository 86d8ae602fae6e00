#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadembed/rng.hpp"
#include "quadembed/tape.hpp"

namespace qde::nn {

enum class Activation { identity, elu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// ELU with alpha = 1.
double elu(double x);

struct DenseLayer {
  Matrix weights;  // out x in
  Matrix bias;     // out x 1
  Activation activation = Activation::identity;

  Eigen::Index in() const noexcept { return weights.cols(); }
  Eigen::Index out() const noexcept { return weights.rows(); }
};

enum class NormMode { train, eval };

/// Batch standardization of the latent coordinates (no affine part).
struct LatentNormLayer {
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  NormMode mode = NormMode::train;

  LatentNormLayer() = default;
  LatentNormLayer(Eigen::Index dim, double momentum, double epsilon);

  Eigen::Index dim() const noexcept { return running_mean.size(); }
};

class Network {
 public:
  Network() = default;
  /// Throws DimensionError unless consecutive layers chain and the norm layer
  /// (if any) matches the last layer's width.
  Network(std::vector<DenseLayer> layers, std::optional<LatentNormLayer> norm = std::nullopt);

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::optional<LatentNormLayer>& norm() noexcept { return norm_; }
  const std::optional<LatentNormLayer>& norm() const noexcept { return norm_; }

  void set_mode(NormMode mode);

  /// Weights and biases named "<prefix>.<i>.weight" / "<prefix>.<i>.bias".
  /// The last bias is left out when a norm layer follows it.
  ParameterSet parameters(const std::string& prefix);
  /// Trainable scalars, i.e. the size of parameters().
  std::size_t parameter_count() const;

 private:
  std::vector<DenseLayer> layers_;
  std::optional<LatentNormLayer> norm_;
};

struct NetworkSpec {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden = Activation::elu;
  Activation output = Activation::identity;
  bool latent_norm = false;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
Network init_network(const NetworkSpec& spec, Rng& rng);

/// Plain evaluation. In train mode the norm layer uses batch statistics and
/// updates its running statistics.
Matrix forward(Network& net, const Matrix& batch);

/// Inference: the norm layer (if any) always uses its running statistics,
/// regardless of mode.
Matrix predict(const Network& net, const Matrix& batch);

/// Same computation recorded on a tape with the network's weights as parameters.
Var forward(Tape& tape, Network& net, const Var& batch);

/// Resets running statistics to the exact population statistics of the
/// pre-norm activations on `data`.
void calibrate_norm(Network& net, const Matrix& data);

}  // namespace qde::nn
