#include "gradient_check.hpp"
#include "msd/errors.hpp"
#include "msd/training.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

using namespace msd;

namespace {

Trajectory decay_trajectory(double x0, double t1, double dt) {
  return simulate(msd::testing::scalar_system([](double x) { return -x; }), StateVector::Constant(1, x0), 0.0, t1, dt);
}

Trajectory rotation_trajectory(Eigen::Index samples) {
  Eigen::Matrix2d A;
  A << 0, 1, -1, 0;
  const OdeSystem sys{2, [A](const StateVector& x) { return StateVector(A * x); }, "rotation"};
  const double dt = 2.0 * M_PI / static_cast<double>(samples - 1);
  return simulate(sys, Eigen::Vector2d(1.0, 0.0), 0.0, 2.0 * M_PI, dt);
}

TrainConfig small_config(std::size_t iterations, std::vector<Eigen::Index> hidden = {16}) {
  TrainConfig c;
  c.iterations = iterations;
  c.hidden_widths = std::move(hidden);
  c.learning_rate = 1e-2;
  c.final_learning_rate = 1e-4;
  return c;
}

double max_abs(const LayerParameters& p) {
  double m = 0.0;
  for (const auto& l : p) m = std::max({m, l.weight.cwiseAbs().maxCoeff(), l.bias.cwiseAbs().maxCoeff()});
  return m;
}

}  // namespace

TEST(LossAndGradients, MatchesFiniteDifferencesOnRandomNetworks) {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const msd::testing::GradientCase c = msd::testing::random_gradient_case(seed);
    const msd::testing::GradientCheck r = msd::testing::check_gradients(c);
    EXPECT_LT(r.max_relative_error, 1e-6) << "case " << seed << " with " << r.parameters << " parameters";
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}

TEST(LossAndGradients, LossEqualsMultistepMse) {
  const msd::testing::GradientCase c = msd::testing::random_gradient_case(7);
  const double direct = mse_loss(c.scheme, c.traj, [&](const StateVector& x) { return c.mlp.forward(x); });
  EXPECT_NEAR(loss_and_gradients(c.mlp, c.traj, c.scheme).loss, direct, 1e-14 * std::max(1.0, direct));
}

TEST(LossAndGradients, ZeroNetworkOnEquilibriumIsStationary) {
  Mlp m = init_mlp(2, {5}, 1);
  m.mutable_layers().back().weight.setZero();
  m.mutable_layers().back().bias.setZero();
  // BDF(2)'s alpha sums to zero only up to rounding away from the origin.
  const Trajectory eq(0.0, 0.1, Eigen::MatrixXd::Constant(2, 12, 0.7));
  const Trajectory origin(0.0, 0.1, Eigen::MatrixXd::Zero(2, 12));
  for (const auto& [traj, s] : {std::pair{eq, adams_moulton(1)}, std::pair{eq, adams_bashforth(2)},
                                std::pair{origin, bdf(2)}}) {
    const LossAndGradients lg = loss_and_gradients(m, traj, s);
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(max_abs(lg.gradients), 0.0);
  }
}

TEST(LossAndGradients, DoublingBetaQuadruplesGradientsOnConstantTrajectory) {
  const Mlp m = msd::testing::random_gradient_case(4).mlp;
  const Trajectory constant(0.0, 0.2, Eigen::MatrixXd::Constant(m.input_dim(), 12, 0.3));
  SchemeCoefficients s = adams_moulton(2);
  const LossAndGradients base = loss_and_gradients(m, constant, s);
  s.beta *= 2.0;
  const LossAndGradients doubled = loss_and_gradients(m, constant, s);
  EXPECT_NEAR(doubled.loss, 4.0 * base.loss, 1e-14);
  const Eigen::VectorXd g0 = flatten(base.gradients), g1 = flatten(doubled.gradients);
  EXPECT_LT((g1 - 4.0 * g0).cwiseAbs().maxCoeff(), 1e-13 * std::max(1.0, g0.cwiseAbs().maxCoeff()));
}

TEST(LossAndGradients, SubsetOfResidualsAveragesOnlyThose) {
  const msd::testing::GradientCase c = msd::testing::random_gradient_case(2);
  const auto M = static_cast<Eigen::Index>(c.scheme.steps);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(c.traj.size() - M));
  std::iota(all.begin(), all.end(), M);
  const LossAndGradients full = loss_and_gradients(c.mlp, c.traj, c.scheme);
  const LossAndGradients listed = loss_and_gradients(c.mlp, c.traj, c.scheme, &all);
  EXPECT_NEAR(listed.loss, full.loss, 1e-15);
  EXPECT_LT((flatten(listed.gradients) - flatten(full.gradients)).cwiseAbs().maxCoeff(), 1e-15);

  const std::vector<Eigen::Index> one{M + 3};
  const double single = loss_and_gradients(c.mlp, c.traj, c.scheme, &one).loss;
  const StateVector y = residual(c.scheme, c.traj, [&](const StateVector& x) { return c.mlp.forward(x); }, M + 3);
  EXPECT_NEAR(single, y.squaredNorm(), 1e-14);
}

TEST(LossAndGradients, FullBatchIgnoresResidualOrder) {
  const msd::testing::GradientCase c = msd::testing::random_gradient_case(9);
  const auto M = static_cast<Eigen::Index>(c.scheme.steps);
  std::vector<Eigen::Index> forward(static_cast<std::size_t>(c.traj.size() - M));
  std::iota(forward.begin(), forward.end(), M);
  std::vector<Eigen::Index> shuffled = forward;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 3, shuffled.end());
  const LossAndGradients a = loss_and_gradients(c.mlp, c.traj, c.scheme, &forward);
  const LossAndGradients b = loss_and_gradients(c.mlp, c.traj, c.scheme, &shuffled);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(flatten(a.gradients), flatten(b.gradients));
}

TEST(LossAndGradients, ShortTrajectoryRejected) {
  const Mlp m = init_mlp(1, {3}, 0);
  EXPECT_THROW(loss_and_gradients(m, Trajectory(0.0, 0.1, Eigen::MatrixXd::Zero(1, 2)), bdf(2)),
               InvalidInputError);
}

TEST(LossAndGradients, NonFiniteLossIsNumericError) {
  Mlp m = init_mlp(1, {3}, 0);
  m.mutable_layers().back().bias[0] = 1e300;
  const Trajectory t(0.0, 1.0, Eigen::MatrixXd::Zero(1, 5));
  EXPECT_THROW(loss_and_gradients(m, t, adams_moulton(1)), NumericError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Mlp m = init_mlp(2, {6}, 3);
  const Mlp before = m;
  OptimizerState opt = OptimizerState::for_model(m, 1e-3);
  adam_step(opt, m, zeros_like(m.layers()));
  EXPECT_EQ(m, before);
  EXPECT_EQ(opt.step, 1u);
}

TEST(Adam, FirstStepMovesEachParameterByAtMostTheLearningRate) {
  Mlp m = init_mlp(2, {6}, 3);
  const Eigen::VectorXd before = flatten(m.layers());
  LayerParameters g = zeros_like(m.layers());
  Eigen::VectorXd flat_g = Eigen::VectorXd::LinSpaced(before.size(), -3.0, 2.0);
  flat_g[0] = 1e-9;
  unflatten(flat_g, g);
  const double eta = 1e-3;
  OptimizerState opt = OptimizerState::for_model(m, eta);
  adam_step(opt, m, g);
  const Eigen::VectorXd delta = flatten(m.layers()) - before;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    const double expected = -eta * flat_g[i] / (std::abs(flat_g[i]) + opt.epsilon);
    EXPECT_NEAR(delta[i], expected, 1e-15);
    EXPECT_LE(std::abs(delta[i]), eta * (1.0 + 1e-12));
  }
}

TEST(Adam, Deterministic) {
  const msd::testing::GradientCase c = msd::testing::random_gradient_case(5);
  auto run = [&] {
    Mlp m = c.mlp;
    OptimizerState opt = OptimizerState::for_model(m, 1e-2);
    for (int i = 0; i < 20; ++i) adam_step(opt, m, loss_and_gradients(m, c.traj, c.scheme).gradients);
    return m;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainConfig, RejectsZeroIterationsAndBadRates) {
  TrainConfig c;
  c.iterations = 0;
  EXPECT_THROW(c.validate(), InvalidInputError);
  c.iterations = 1;
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), InvalidInputError);
  EXPECT_THROW(train(decay_trajectory(1.0, 1.0, 0.1), c), InvalidInputError);
}

TEST(Train, SingleIterationRecordsOneLoss) {
  const TrainResult r = train(decay_trajectory(1.0, 1.0, 0.1), small_config(1));
  EXPECT_EQ(r.loss_history.size(), 1u);
}

TEST(Train, ReturnsBestParametersAndNeverWorsens) {
  const Trajectory data = decay_trajectory(1.0, 5.0, 0.05);
  const TrainResult r = train(data, small_config(300));
  const double min_seen = *std::min_element(r.loss_history.begin(), r.loss_history.end());
  EXPECT_LE(r.best_loss, min_seen);
  EXPECT_LE(r.best_loss, r.loss_history.front());
  EXPECT_NEAR(loss_and_gradients(r.model, data, adams_moulton(1)).loss, r.best_loss, 1e-15);
}

TEST(Train, LearnsLinearDecayOnTheUnitInterval) {
  const Trajectory data = decay_trajectory(1.0, 5.0, 0.05);
  ASSERT_EQ(data.size(), 101);
  const TrainResult r = train(data, small_config(5000));

  double running = std::numeric_limits<double>::infinity();
  for (double loss : r.loss_history) {
    const double next = std::min(running, loss);
    EXPECT_LE(next, running);
    running = next;
  }
  EXPECT_LT(r.best_loss, 1e-4 * r.loss_history.front());

  double worst = 0.0;
  for (double x = -1.0; x <= 1.0 + 1e-12; x += 0.01) {
    worst = std::max(worst, std::abs(r.model.forward(StateVector::Constant(1, x))[0] + x));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Train, RecoversRotationMatrix) {
  const Trajectory data = rotation_trajectory(101);
  TrainConfig c = small_config(4000, {32});
  const TrainResult r = train(data, c);
  // Least-squares linear map through the network outputs at the data states.
  const Eigen::MatrixXd X = data.states();
  const Eigen::MatrixXd F = r.model.forward_batch(X);
  const Eigen::MatrixXd A = (X * X.transpose()).ldlt().solve(X * F.transpose()).transpose();
  Eigen::Matrix2d expected;
  expected << 0, 1, -1, 0;
  EXPECT_LT((A - expected).cwiseAbs().maxCoeff(), 0.05) << A;
}

TEST(Train, MinibatchRunsAreDeterministic) {
  const Trajectory data = decay_trajectory(1.0, 5.0, 0.05);
  TrainConfig c = small_config(50);
  c.minibatch_size = 20;
  const TrainResult a = train(data, c), b = train(data, c);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Train, DivergenceRaisesTrainingErrorWithLastFiniteLoss) {
  const Trajectory data = decay_trajectory(1.0, 5.0, 0.05);
  TrainConfig c = small_config(200);
  c.learning_rate = 1e200;
  c.final_learning_rate = 0.0;
  try {
    train(data, c);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_TRUE(std::isfinite(e.last_finite_loss()));
  }
}

TEST(Resimulate, NearZeroFieldStaysNearInitialState) {
  Mlp m = init_mlp(2, {4}, 0);
  m.mutable_layers().back().weight *= 1e-9;
  const StateVector x0 = Eigen::Vector2d(0.4, -0.2);
  const Trajectory t = resimulate(m, x0, 0.0, 10.0, 0.1);
  double max_f = 0.0;
  for (Eigen::Index n = 0; n < t.size(); ++n) max_f = std::max(max_f, m.forward(t.state(n)).cwiseAbs().maxCoeff());
  for (Eigen::Index n = 0; n < t.size(); ++n) {
    EXPECT_LE((t.state(n) - x0).cwiseAbs().maxCoeff(), max_f * 10.0 * 1.01 + 1e-15);
  }
}

TEST(Resimulate, Deterministic) {
  const Mlp m = init_mlp(3, {8}, 4);
  const StateVector x0 = Eigen::Vector3d(0.1, 0.2, 0.3);
  EXPECT_EQ(resimulate(m, x0, 0.0, 5.0, 0.01), resimulate(m, x0, 0.0, 5.0, 0.01));
}

TEST(Resimulate, BlowUpIsDivergenceError) {
  Mlp m = init_mlp(1, {1}, 0);
  m.mutable_layers()[0].weight(0, 0) = 0.0;
  m.mutable_layers()[0].bias[0] = 0.0;
  m.mutable_layers()[1].bias[0] = 1e7;
  EXPECT_THROW(resimulate(m, StateVector::Zero(1), 0.0, 100.0, 0.1), DivergenceError);
}
