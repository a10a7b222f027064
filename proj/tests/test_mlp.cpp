#include "msd/errors.hpp"
#include "msd/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace msd;

namespace {

Mlp unit_net(Activation act = Activation::Tanh) {
  LayerParameters layers{{Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)},
                         {Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)}};
  return Mlp(layers, act, Normalization::identity(1));
}

}  // namespace

TEST(MlpInit, SameSeedGivesIdenticalParameters) {
  EXPECT_EQ(init_mlp(3, {16, 8}, 42), init_mlp(3, {16, 8}, 42));
  EXPECT_FALSE(init_mlp(3, {16}, 1) == init_mlp(3, {16}, 2));
}

TEST(MlpInit, LayerShapesChainFromDToD) {
  const Mlp m = init_mlp(7, {256}, 0);
  ASSERT_EQ(m.layers().size(), 2u);
  EXPECT_EQ(m.layers()[0].weight.rows(), 256);
  EXPECT_EQ(m.layers()[0].weight.cols(), 7);
  EXPECT_EQ(m.layers()[1].weight.rows(), 7);
  EXPECT_EQ(m.layers()[1].weight.cols(), 256);
  EXPECT_EQ(m.input_dim(), 7);
  EXPECT_EQ(m.output_dim(), 7);
  EXPECT_EQ(m.parameter_count(), 7 * 256 + 256 + 256 * 7 + 7);
  EXPECT_EQ(m.hidden_widths(), std::vector<Eigen::Index>{256});
}

TEST(MlpInit, ZeroInputGivesZeroOutput) {
  const Mlp m = init_mlp(7, {256}, 3);
  EXPECT_EQ(m.forward(StateVector::Zero(7)), StateVector::Zero(7));
}

TEST(MlpInit, WeightVarianceMatchesGlorot) {
  const Mlp m = init_mlp(7, {256}, 5);
  for (const auto& layer : m.layers()) {
    const Eigen::ArrayXd w = Eigen::Map<const Eigen::ArrayXd>(layer.weight.data(), layer.weight.size());
    const double mean = w.mean();
    const double var = (w - mean).square().sum() / static_cast<double>(w.size() - 1);
    const double expected = 2.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols());
    EXPECT_NEAR(var / expected, 1.0, 0.15);
    EXPECT_TRUE(layer.bias.isZero());
  }
}

TEST(MlpInit, RejectsZeroWidth) {
  EXPECT_THROW(init_mlp(2, {0}, 0), InvalidInputError);
  EXPECT_THROW(init_mlp(0, {4}, 0), InvalidInputError);
}

TEST(MlpForward, UnitNetworkAtZeroAndOne) {
  const Mlp m = unit_net();
  EXPECT_EQ(m.forward(StateVector::Zero(1))[0], 0.0);
  EXPECT_NEAR(m.forward(StateVector::Ones(1))[0], 0.7615941559557649, 1e-15);
}

TEST(MlpForward, SigmoidUnitNetwork) {
  EXPECT_NEAR(unit_net(Activation::Sigmoid).forward(StateVector::Zero(1))[0], 0.5, 1e-15);
}

TEST(MlpForward, FiniteForLargeInputs) {
  const Mlp m = init_mlp(3, {32}, 9);
  for (double v : {1e3, -1e3, 500.0}) {
    EXPECT_TRUE(m.forward(StateVector::Constant(3, v)).allFinite());
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  EXPECT_THROW(init_mlp(3, {4}, 0).forward(StateVector::Zero(2)), InvalidInputError);
}

TEST(MlpForward, BatchMatchesColumnwise) {
  const Mlp m = init_mlp(3, {8, 5}, 11);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 10);
  const Eigen::MatrixXd y = m.forward_batch(x);
  for (Eigen::Index k = 0; k < x.cols(); ++k) EXPECT_LT((y.col(k) - m.forward(x.col(k))).norm(), 1e-14);
}

TEST(MlpForward, NormalizationIsFoldedIn) {
  Mlp m = unit_net();
  Normalization n = Normalization::identity(1);
  n.input_mean[0] = 1.0;
  n.input_scale[0] = 2.0;
  n.output_scale[0] = 3.0;
  m.set_normalization(n);
  EXPECT_NEAR(m.forward(StateVector::Constant(1, 3.0))[0], 3.0 * std::tanh(1.0), 1e-15);
}

TEST(Mlp, RejectsBadShapesAndNonFiniteParameters) {
  LayerParameters bad{{Eigen::MatrixXd::Ones(4, 2), Eigen::VectorXd::Zero(4)},
                      {Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Zero(2)}};
  EXPECT_THROW(Mlp(bad, Activation::Tanh, Normalization::identity(2)), InvalidInputError);
  LayerParameters nan{{Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1)},
                      {Eigen::MatrixXd::Constant(1, 1, std::nan("")), Eigen::VectorXd::Zero(1)}};
  EXPECT_THROW(Mlp(nan, Activation::Tanh, Normalization::identity(1)), InvalidInputError);
}

TEST(Mlp, FlattenUnflattenRoundTrip) {
  const Mlp m = init_mlp(2, {3, 4}, 1);
  const Eigen::VectorXd flat = flatten(m.layers());
  EXPECT_EQ(flat.size(), m.parameter_count());
  LayerParameters copy = zeros_like(m.layers());
  unflatten(flat, copy);
  for (std::size_t l = 0; l < copy.size(); ++l) {
    EXPECT_EQ(copy[l].weight, m.layers()[l].weight);
    EXPECT_EQ(copy[l].bias, m.layers()[l].bias);
  }
}

TEST(Activation, ParseAndPrint) {
  EXPECT_EQ(parse_activation("tanh"), Activation::Tanh);
  EXPECT_EQ(parse_activation("sigmoid"), Activation::Sigmoid);
  EXPECT_EQ(to_string(Activation::Sigmoid), "sigmoid");
  EXPECT_THROW(parse_activation("relu"), InvalidInputError);
}
