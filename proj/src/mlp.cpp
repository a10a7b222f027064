#include "msd/mlp.hpp"

#include "msd/errors.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace msd {

namespace {

Eigen::ArrayXXd activate(Activation activation, const Eigen::ArrayXXd& z) {
  if (activation == Activation::Tanh) return z.tanh();
  return 1.0 / (1.0 + (-z).exp());
}

Eigen::VectorXd positive_or_one(Eigen::VectorXd v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 1e-12) || !std::isfinite(v[i])) v[i] = 1.0;
  }
  return v;
}

}  // namespace

std::string_view to_string(Activation activation) {
  return activation == Activation::Tanh ? "tanh" : "sigmoid";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw InvalidInputError("unknown activation '" + std::string(name) + "'");
}

Normalization Normalization::identity(Eigen::Index dimension) {
  return {Eigen::VectorXd::Zero(dimension), Eigen::VectorXd::Ones(dimension), Eigen::VectorXd::Ones(dimension)};
}

Mlp::Mlp(LayerParameters layers, Activation activation, Normalization normalization)
    : layers_(std::move(layers)), activation_(activation), normalization_(std::move(normalization)) {
  check();
}

void Mlp::set_normalization(Normalization normalization) {
  normalization_ = std::move(normalization);
  check();
}

std::vector<Eigen::Index> Mlp::hidden_widths() const {
  std::vector<Eigen::Index> widths;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) widths.push_back(layers_[l].weight.rows());
  return widths;
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index count = 0;
  for (const auto& layer : layers_) count += layer.weight.size() + layer.bias.size();
  return count;
}

void Mlp::check() const {
  if (layers_.empty()) throw InvalidInputError("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1) throw InvalidInputError("empty layer");
    if (layer.bias.size() != layer.weight.rows()) {
      throw InvalidInputError("bias of layer " + std::to_string(l) + " does not match its weight rows");
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw InvalidInputError("layer " + std::to_string(l) + " does not chain with the previous layer");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw InvalidInputError("layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  if (input_dim() != output_dim()) throw InvalidInputError("network must map R^D to R^D");
  const Eigen::Index D = input_dim();
  const Normalization& n = normalization_;
  if (n.input_mean.size() != D || n.input_scale.size() != D || n.output_scale.size() != D) {
    throw InvalidInputError("normalization constants do not match the network dimension");
  }
  if (!n.input_mean.allFinite() || !n.input_scale.allFinite() || !n.output_scale.allFinite() ||
      (n.input_scale.array() <= 0.0).any() || (n.output_scale.array() <= 0.0).any()) {
    throw InvalidInputError("normalization scales must be finite and positive");
  }
}

StateVector Mlp::forward(const StateVector& x) const {
  if (x.size() != input_dim()) {
    throw InvalidInputError("network input has dimension " + std::to_string(x.size()) + ", expected " +
                            std::to_string(input_dim()));
  }
  return forward_batch(x);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_dim()) throw InvalidInputError("network input dimension mismatch");
  Eigen::MatrixXd a =
      ((x.colwise() - normalization_.input_mean).array().colwise() / normalization_.input_scale.array()).matrix();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      a = activate(activation_, z.array()).matrix();
    } else {
      a = std::move(z);
    }
  }
  return (a.array().colwise() * normalization_.output_scale.array()).matrix();
}

bool Mlp::operator==(const Mlp& other) const {
  if (activation_ != other.activation_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.weight != b.weight ||
        a.bias != b.bias) {
      return false;
    }
  }
  return normalization_.input_mean == other.normalization_.input_mean &&
         normalization_.input_scale == other.normalization_.input_scale &&
         normalization_.output_scale == other.normalization_.output_scale;
}

Mlp init_mlp(Eigen::Index dimension, const std::vector<Eigen::Index>& hidden_widths, std::uint64_t seed,
             Activation activation) {
  if (dimension < 1) throw InvalidInputError("network dimension must be >= 1");
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::Index> widths;
  widths.push_back(dimension);
  for (Eigen::Index w : hidden_widths) {
    if (w < 1) throw InvalidInputError("hidden widths must be >= 1");
    widths.push_back(w);
  }
  widths.push_back(dimension);

  LayerParameters layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Eigen::Index fan_in = widths[l];
    const Eigen::Index fan_out = widths[l + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index j = 0; j < fan_in; ++j) {
      for (Eigen::Index i = 0; i < fan_out; ++i) layer.weight(i, j) = stddev * normal(rng);
    }
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers), activation, Normalization::identity(dimension));
}

Normalization normalization_from(const Trajectory& traj) {
  const Eigen::MatrixXd& x = traj.states();
  const Eigen::Index D = x.rows();
  Normalization n;
  n.input_mean = x.rowwise().mean();
  n.input_scale = positive_or_one(
      ((x.colwise() - n.input_mean).array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt());
  if (x.cols() < 2) {
    n.output_scale = Eigen::VectorXd::Ones(D);
    return n;
  }
  const Eigen::MatrixXd slopes = (x.rightCols(x.cols() - 1) - x.leftCols(x.cols() - 1)) / traj.dt();
  const Eigen::VectorXd slope_mean = slopes.rowwise().mean();
  n.output_scale = positive_or_one(
      ((slopes.colwise() - slope_mean).array().square().rowwise().sum() / static_cast<double>(slopes.cols()))
          .sqrt());
  return n;
}

LayerParameters zeros_like(const LayerParameters& layers) {
  LayerParameters out;
  out.reserve(layers.size());
  for (const auto& layer : layers) {
    out.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                   Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return out;
}

Eigen::VectorXd flatten(const LayerParameters& layers) {
  Eigen::Index total = 0;
  for (const auto& layer : layers) total += layer.weight.size() + layer.bias.size();
  Eigen::VectorXd flat(total);
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    flat.segment(offset, layer.weight.size()) = layer.weight.reshaped();
    offset += layer.weight.size();
    flat.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, LayerParameters& layers) {
  Eigen::Index offset = 0;
  for (auto& layer : layers) {
    layer.weight.reshaped() = flat.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias = flat.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
  if (offset != flat.size()) throw InvalidInputError("flat parameter vector has the wrong length");
}

}  // namespace msd
