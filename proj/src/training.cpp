#include "msd/training.hpp"

#include "msd/errors.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace msd {

namespace {

}  // namespace

// Buffers reused across iterations; 256 x 1001 activations would otherwise
// be reallocated on every call.
struct MultistepObjective::Workspace {
  std::vector<Eigen::MatrixXd> activations;  // a_0 (normalized input), a_1, ..., a_{L-1}
  Eigen::MatrixXd output;                    // f, after output scaling
  Eigen::MatrixXd delta;
  Eigen::MatrixXd upstream;
  Eigen::MatrixXd grad_f;
};

namespace {

using Workspace = MultistepObjective::Workspace;

void apply_activation(Activation activation, const Eigen::MatrixXd& z, Eigen::MatrixXd& out) {
  if (activation == Activation::Tanh) {
    // Same value as tanh to rounding; Eigen vectorizes exp but not tanh.
    out.array() = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
  } else {
    out.array() = 1.0 / (1.0 + (-z.array()).exp());
  }
}

void forward_with_cache(const Mlp& mlp, const Eigen::MatrixXd& x, Workspace& ws) {
  const auto& layers = mlp.layers();
  const auto& norm = mlp.normalization();
  ws.activations.resize(layers.size());
  ws.activations[0] = ((x.colwise() - norm.input_mean).array().colwise() / norm.input_scale.array()).matrix();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    Eigen::MatrixXd& next = ws.activations[l + 1];
    next.resize(layers[l].weight.rows(), x.cols());
    next.noalias() = layers[l].weight * ws.activations[l];
    next.colwise() += layers[l].bias;
    apply_activation(mlp.activation(), next, next);
  }
  ws.output.resize(layers.back().weight.rows(), x.cols());
  ws.output.noalias() = layers.back().weight * ws.activations.back();
  ws.output.colwise() += layers.back().bias;
  ws.output.array().colwise() *= norm.output_scale.array();
}

// Backpropagates dL/df (held in ws.grad_f) to the parameters.
void backward(const Mlp& mlp, Workspace& ws, LayerParameters& grads) {
  const auto& layers = mlp.layers();
  grads.resize(layers.size());
  ws.delta = (ws.grad_f.array().colwise() * mlp.normalization().output_scale.array()).matrix();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = ws.activations[l];
    grads[l].weight.resize(layers[l].weight.rows(), layers[l].weight.cols());
    grads[l].weight.noalias() = ws.delta * input.transpose();
    grads[l].bias = ws.delta.rowwise().sum();
    if (l == 0) break;
    ws.upstream.resize(layers[l].weight.cols(), ws.delta.cols());
    ws.upstream.noalias() = layers[l].weight.transpose() * ws.delta;
    if (mlp.activation() == Activation::Tanh) {
      ws.upstream.array() *= 1.0 - input.array().square();
    } else {
      ws.upstream.array() *= input.array() * (1.0 - input.array());
    }
    ws.delta.swap(ws.upstream);
  }
}

double full_batch(const Mlp& mlp, const Trajectory& traj, const SchemeCoefficients& coeffs, Workspace& ws,
                  LayerParameters& grads) {
  const int M = coeffs.steps;
  forward_with_cache(mlp, traj.states(), ws);
  const Eigen::MatrixXd y = residual_matrix(coeffs, traj.states(), ws.output, traj.dt());
  const auto count = static_cast<double>(y.cols());
  const double loss = y.squaredNorm() / count;

  ws.grad_f.setZero(traj.dimension(), traj.size());
  for (int m = 0; m <= M; ++m) {
    if (coeffs.beta[m] == 0.0) continue;
    ws.grad_f.middleCols(M - m, y.cols()) += (2.0 / count * traj.dt() * coeffs.beta[m]) * y;
  }
  backward(mlp, ws, grads);
  return loss;
}

double subset_batch(const Mlp& mlp, const Trajectory& traj, const SchemeCoefficients& coeffs,
                    const std::vector<Eigen::Index>& indices, Workspace& ws, LayerParameters& grads) {
  const int M = coeffs.steps;
  if (indices.empty()) throw InvalidInputError("residual index subset is empty");
  std::vector<Eigen::Index> touched;
  for (Eigen::Index n : indices) {
    if (n < M || n > traj.last()) throw IndexError("residual index " + std::to_string(n) + " out of range");
    for (int m = 0; m <= M; ++m) {
      if (coeffs.beta[m] != 0.0) touched.push_back(n - m);
    }
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  std::vector<Eigen::Index> column(static_cast<std::size_t>(traj.size()), -1);
  Eigen::MatrixXd x(traj.dimension(), static_cast<Eigen::Index>(touched.size()));
  for (std::size_t c = 0; c < touched.size(); ++c) {
    column[static_cast<std::size_t>(touched[c])] = static_cast<Eigen::Index>(c);
    x.col(static_cast<Eigen::Index>(c)) = traj.states().col(touched[c]);
  }

  forward_with_cache(mlp, x, ws);
  const auto count = static_cast<double>(indices.size());
  ws.grad_f.setZero(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index n : indices) {
    StateVector y = StateVector::Zero(traj.dimension());
    for (int m = 0; m <= M; ++m) {
      y += coeffs.alpha[m] * traj.states().col(n - m);
      if (coeffs.beta[m] != 0.0) {
        y += (traj.dt() * coeffs.beta[m]) * ws.output.col(column[static_cast<std::size_t>(n - m)]);
      }
    }
    loss += y.squaredNorm();
    for (int m = 0; m <= M; ++m) {
      if (coeffs.beta[m] == 0.0) continue;
      ws.grad_f.col(column[static_cast<std::size_t>(n - m)]) += (2.0 / count * traj.dt() * coeffs.beta[m]) * y;
    }
  }
  backward(mlp, ws, grads);
  return loss / count;
}

}  // namespace

MultistepObjective::MultistepObjective(const Trajectory& traj, SchemeCoefficients coeffs)
    : traj_(&traj), coeffs_(std::move(coeffs)), workspace_(std::make_unique<Workspace>()) {
  if (traj.size() < coeffs_.steps + 1) {
    throw InvalidInputError("training needs at least M + 1 = " + std::to_string(coeffs_.steps + 1) +
                            " samples, got " + std::to_string(traj.size()));
  }
}

MultistepObjective::~MultistepObjective() = default;
MultistepObjective::MultistepObjective(MultistepObjective&&) noexcept = default;
MultistepObjective& MultistepObjective::operator=(MultistepObjective&&) noexcept = default;

double MultistepObjective::evaluate(const Mlp& mlp, LayerParameters& gradients,
                                    const std::vector<Eigen::Index>* residual_indices) {
  if (traj_->dimension() != mlp.input_dim()) throw InvalidInputError("trajectory and network dimensions differ");
  const double loss = residual_indices
                          ? subset_batch(mlp, *traj_, coeffs_, *residual_indices, *workspace_, gradients)
                          : full_batch(mlp, *traj_, coeffs_, *workspace_, gradients);
  if (!std::isfinite(loss)) throw NumericError("multistep loss is not finite");
  return loss;
}

LossAndGradients loss_and_gradients(const Mlp& mlp, const Trajectory& traj, const SchemeCoefficients& coeffs,
                                    const std::vector<Eigen::Index>* residual_indices) {
  MultistepObjective objective(traj, coeffs);
  LossAndGradients out;
  out.loss = objective.evaluate(mlp, out.gradients, residual_indices);
  return out;
}

OptimizerState OptimizerState::for_model(const Mlp& mlp, double learning_rate) {
  OptimizerState opt;
  opt.first_moment = zeros_like(mlp.layers());
  opt.second_moment = zeros_like(mlp.layers());
  opt.learning_rate = learning_rate;
  return opt;
}

void adam_step(OptimizerState& opt, Mlp& mlp, const LayerParameters& gradients) {
  LayerParameters& params = mlp.mutable_layers();
  if (gradients.size() != params.size() || opt.first_moment.size() != params.size() ||
      opt.second_moment.size() != params.size()) {
    throw InvalidInputError("optimizer state and gradients must match the network layers");
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);

  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    if (theta.size() != g.size()) throw InvalidInputError("gradient shape mismatch");
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseAbs2();
    theta.array() -= opt.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + opt.epsilon);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, opt.first_moment[l].weight, opt.second_moment[l].weight, gradients[l].weight);
    update(params[l].bias, opt.first_moment[l].bias, opt.second_moment[l].bias, gradients[l].bias);
  }
}

void TrainConfig::validate() const {
  if (iterations < 1) throw InvalidInputError("training needs iterations >= 1");
  if (!(learning_rate > 0.0)) throw InvalidInputError("learning rate must be > 0");
  if (hidden_widths.empty()) throw InvalidInputError("network needs at least one hidden layer");
  for (Eigen::Index w : hidden_widths) {
    if (w < 1) throw InvalidInputError("hidden widths must be >= 1");
  }
  if (!(final_learning_rate >= 0.0)) throw InvalidInputError("final learning rate must be >= 0");
  if (!(tolerance >= 0.0)) throw InvalidInputError("tolerance must be >= 0");
}

TrainResult train(const Trajectory& traj, const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  Mlp mlp = init_mlp(traj.dimension(), config.hidden_widths, config.seed, config.activation);
  if (config.normalize) mlp.set_normalization(normalization_from(traj));
  return train_from(std::move(mlp), traj, config, progress);
}

TrainResult train_from(Mlp initial, const Trajectory& traj, const TrainConfig& config,
                       const TrainProgress& progress) {
  config.validate();
  const int M = config.scheme.steps;
  if (traj.size() < M + 1) throw InvalidInputError("training needs at least M + 1 samples");
  const Eigen::Index residual_count = traj.size() - M;
  const bool use_minibatch =
      config.minibatch_size > 0 && static_cast<Eigen::Index>(config.minibatch_size) < residual_count;

  Mlp mlp = std::move(initial);
  MultistepObjective objective(traj, config.scheme);
  LayerParameters gradients;
  OptimizerState opt = OptimizerState::for_model(mlp, config.learning_rate);
  boost::random::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> all_indices(static_cast<std::size_t>(residual_count));
  std::iota(all_indices.begin(), all_indices.end(), static_cast<Eigen::Index>(M));
  std::vector<Eigen::Index> batch;

  TrainResult result{mlp, {}, 0.0, 0};
  result.loss_history.reserve(config.iterations);
  double best = std::numeric_limits<double>::infinity();
  double last_finite = std::numeric_limits<double>::quiet_NaN();

  auto evaluate = [&](std::size_t iteration) {
    try {
      if (use_minibatch) {
        // Partial Fisher-Yates shuffle picks the batch without replacement.
        for (std::size_t i = 0; i < config.minibatch_size; ++i) {
          boost::random::uniform_int_distribution<std::size_t> pick(i, all_indices.size() - 1);
          std::swap(all_indices[i], all_indices[pick(rng)]);
        }
        batch.assign(all_indices.begin(), all_indices.begin() + static_cast<std::ptrdiff_t>(config.minibatch_size));
        std::sort(batch.begin(), batch.end());
        return objective.evaluate(mlp, gradients, &batch);
      }
      return objective.evaluate(mlp, gradients);
    } catch (const NumericError&) {
      throw TrainingError("training diverged at iteration " + std::to_string(iteration) +
                              " (last finite loss " + std::to_string(last_finite) + ")",
                          last_finite, iteration);
    }
  };
  const double decay = config.final_learning_rate > 0.0 && config.iterations > 1
                           ? std::log(config.final_learning_rate / config.learning_rate) /
                                 static_cast<double>(config.iterations - 1)
                           : 0.0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double loss = evaluate(it);
    last_finite = loss;
    result.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      result.model = mlp;
      result.best_iteration = it;
    }
    if (progress) progress(it, loss);
    if (loss <= config.tolerance) break;
    opt.learning_rate = config.learning_rate * std::exp(decay * static_cast<double>(it));
    adam_step(opt, mlp, gradients);
    bool finite = true;
    for (const auto& layer : mlp.layers()) finite = finite && layer.weight.allFinite() && layer.bias.allFinite();
    if (!finite) {
      throw TrainingError("parameters became non-finite at iteration " + std::to_string(it), last_finite, it);
    }
  }

  // Score the parameters left by the final update. Minibatch losses are
  // noisy estimates, so the final check always uses the full batch.
  if (!use_minibatch && result.loss_history.size() == config.iterations) {
    try {
      const double final_loss = objective.evaluate(mlp, gradients);
      if (final_loss < best) {
        best = final_loss;
        result.model = mlp;
        result.best_iteration = result.loss_history.size();
      }
    } catch (const NumericError&) {
    }
  }
  result.best_loss = best;
  return result;
}

OdeSystem as_system(const Mlp& mlp) {
  return OdeSystem{mlp.input_dim(), [mlp](const StateVector& x) { return mlp.forward(x); }, "neural"};
}

Trajectory resimulate(const Mlp& mlp, const StateVector& x0, double t0, double t1, double dt) {
  return simulate(as_system(mlp), x0, t0, t1, dt);
}

}  // namespace msd
