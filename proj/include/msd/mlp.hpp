#pragma once

#include "msd/ode.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace msd {

enum class Activation { Tanh, Sigmoid };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // fan_out x fan_in
  Eigen::VectorXd bias;    // fan_out
};

/// Per-layer gradient (or moment) storage with the same shapes as the
/// network's layers.
using LayerParameters = std::vector<DenseLayer>;

/// Affine normalization folded into the network:
///   f(x) = output_scale .* net((x - input_mean) ./ input_scale).
struct Normalization {
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  Eigen::VectorXd output_scale;

  static Normalization identity(Eigen::Index dimension);
};

/// Fully connected network R^D -> R^D: hidden layers use `activation`, the
/// output layer is linear.
class Mlp {
 public:
  Mlp(LayerParameters layers, Activation activation, Normalization normalization);

  Eigen::Index input_dim() const { return layers_.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers_.back().weight.rows(); }
  std::vector<Eigen::Index> hidden_widths() const;
  Activation activation() const { return activation_; }
  const LayerParameters& layers() const { return layers_; }
  LayerParameters& mutable_layers() { return layers_; }
  const Normalization& normalization() const { return normalization_; }
  void set_normalization(Normalization normalization);
  Eigen::Index parameter_count() const;

  /// Evaluates f at one state.
  StateVector forward(const StateVector& x) const;
  /// Evaluates f column-wise on a D x K batch.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  /// Validates shapes and finiteness; throws InvalidInputError.
  void check() const;

  bool operator==(const Mlp& other) const;

 private:
  LayerParameters layers_;
  Activation activation_;
  Normalization normalization_;
};

/// Glorot-normal weights (variance 2 / (fan_in + fan_out)), zero biases,
/// identity normalization. Deterministic per seed.
Mlp init_mlp(Eigen::Index dimension, const std::vector<Eigen::Index>& hidden_widths, std::uint64_t seed,
             Activation activation = Activation::Tanh);

/// Normalization from trajectory statistics: inputs standardized by the
/// per-component mean and std, outputs scaled by the std of the
/// finite-difference derivative estimate. Zero spreads fall back to 1.
Normalization normalization_from(const Trajectory& traj);

LayerParameters zeros_like(const LayerParameters& layers);
/// Flattens all parameters as [W1 (column-major), b1, W2, b2, ...].
Eigen::VectorXd flatten(const LayerParameters& layers);
void unflatten(const Eigen::VectorXd& flat, LayerParameters& layers);

}  // namespace msd
