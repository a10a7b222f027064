#pragma once

#include "msd/mlp.hpp"
#include "msd/multistep.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace msd {

struct LossAndGradients {
  double loss = 0.0;
  LayerParameters gradients;
};

/// Multistep MSE of the network and its exact reverse-mode gradient with
/// respect to every weight and bias. `residual_indices`, when given,
/// restricts the average to those n (each in [M, N]); otherwise all
/// n = M..N are used.
LossAndGradients loss_and_gradients(const Mlp& mlp, const Trajectory& traj, const SchemeCoefficients& coeffs,
                                    const std::vector<Eigen::Index>* residual_indices = nullptr);

/// Reusable evaluator of the multistep loss and its gradient for one
/// trajectory and scheme; keeps activation buffers between calls.
class MultistepObjective {
 public:
  MultistepObjective(const Trajectory& traj, SchemeCoefficients coeffs);
  ~MultistepObjective();
  MultistepObjective(MultistepObjective&&) noexcept;
  MultistepObjective& operator=(MultistepObjective&&) noexcept;

  /// Returns the loss and fills `gradients`. Throws NumericError when the
  /// loss is not finite.
  double evaluate(const Mlp& mlp, LayerParameters& gradients,
                  const std::vector<Eigen::Index>* residual_indices = nullptr);

  struct Workspace;

 private:
  const Trajectory* traj_;
  SchemeCoefficients coeffs_;
  std::unique_ptr<Workspace> workspace_;
};

struct OptimizerState {
  std::size_t step = 0;
  LayerParameters first_moment;
  LayerParameters second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_model(const Mlp& mlp, double learning_rate);
};

/// One bias-corrected adaptive-moment update, in place.
void adam_step(OptimizerState& opt, Mlp& mlp, const LayerParameters& gradients);

struct TrainConfig {
  std::size_t iterations = 50000;
  double learning_rate = 1e-3;
  /// When > 0 the step size decays exponentially from `learning_rate` to
  /// this value over the run; otherwise it stays constant.
  double final_learning_rate = 0.0;
  std::uint64_t seed = 0;
  SchemeCoefficients scheme = adams_moulton(1);
  std::vector<Eigen::Index> hidden_widths{256};
  Activation activation = Activation::Tanh;
  /// 0 means full batch.
  std::size_t minibatch_size = 0;
  /// Stop early once the loss drops to this value or below.
  double tolerance = 0.0;
  /// Standardize inputs and scale outputs from trajectory statistics.
  /// Off by default: on the glycolytic benchmark a standardized network fits
  /// the loss better but generalizes off the sampled orbit far worse.
  bool normalize = false;

  void validate() const;
};

struct TrainResult {
  Mlp model;
  /// Loss before each optimizer step, one entry per iteration.
  std::vector<double> loss_history;
  double best_loss = 0.0;
  /// Iteration whose parameters were kept; equals the history length when
  /// the parameters after the final step were best.
  std::size_t best_iteration = 0;
};

using TrainProgress = std::function<void(std::size_t iteration, double loss)>;

/// Initializes a network and minimizes the multistep loss with Adam,
/// returning the lowest-loss parameters seen.
TrainResult train(const Trajectory& traj, const TrainConfig& config, const TrainProgress& progress = {});

/// Continues training from an existing network.
TrainResult train_from(Mlp initial, const Trajectory& traj, const TrainConfig& config,
                       const TrainProgress& progress = {});

OdeSystem as_system(const Mlp& mlp);

/// Integrates dx/dt = f_NN(x) with RK4.
Trajectory resimulate(const Mlp& mlp, const StateVector& x0, double t0, double t1, double dt);

}  // namespace msd
