#pragma once

#include "msd/expr.hpp"

#include <boost/random/mersenne_twister.hpp>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace msd {

using Rng = boost::random::mt19937_64;

/// Regression data for one scalar target: inputs are D x K (one state per
/// column), targets has K entries.
struct SrDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;

  Eigen::Index dimension() const { return inputs.rows(); }
  Eigen::Index samples() const { return inputs.cols(); }
  void validate() const;
};

struct GpConfig {
  std::size_t population_size = 1000;
  std::size_t generations = 100;
  std::size_t tournament_size = 7;
  double crossover_probability = 0.7;
  double mutation_probability = 0.25;
  /// Fitness = MSE + parsimony * complexity.
  double parsimony = 0.0;
  /// Gaussian jitter of a constant c has standard deviation scale * max(|c|, 1).
  double constant_mutation_scale = 0.1;
  std::uint64_t seed = 0;
  /// Stop once the best fitness is at or below this value.
  double early_stop_fitness = 0.0;
  std::size_t elite_count = 1;

  int max_depth = 12;
  std::size_t max_size = 60;
  int init_min_depth = 2;
  int init_max_depth = 5;
  /// Depth of random subtrees grown by mutation.
  int mutation_max_depth = 4;
  double constant_min = -5.0;
  double constant_max = 5.0;
  /// Probability that a random terminal is a variable rather than a constant.
  double variable_probability = 0.6;
  /// Largest exponent for generated pow nodes (>= 2).
  int max_power = 4;
  /// Score each tree after the least-squares rescaling a + b * tree; the
  /// front then holds the rescaled trees.
  bool linear_scaling = true;
  /// Levenberg-Marquardt polishing of the constants on the final Pareto front.
  bool refine_constants = true;
  std::size_t refine_max_evaluations = 4000;
  /// Chance that an offspring gets its constants polished before scoring,
  /// with at most `offspring_refine_evaluations` evaluations.
  double offspring_refine_probability = 0.1;
  std::size_t offspring_refine_evaluations = 40;

  void validate() const;
};

struct ParetoEntry {
  std::size_t complexity = 0;
  /// Mean squared error on the dataset (no parsimony term).
  double loss = 0.0;
  ExprTree expr;
};

/// Ordered by strictly increasing complexity and strictly decreasing loss.
using ParetoFront = std::vector<ParetoEntry>;

struct GpResult {
  ParetoFront front;
  /// Best penalized fitness in the population after each generation,
  /// starting with the initial population.
  std::vector<double> best_fitness_history;
  std::size_t generations_run = 0;
};

/// Mean squared error of `expr` over the dataset, +infinity when any
/// evaluation is invalid.
double mse(const ExprTree& expr, const SrDataset& data);
/// MSE + parsimony * complexity; +infinity for invalid expressions.
double fitness(const ExprTree& expr, const SrDataset& data, double parsimony);

/// Random tree by the grow (full = false) or full method, depth <= max_depth.
ExprTree random_tree(Rng& rng, const GpConfig& config, int dimension, int max_depth, bool full);

/// Replaces a random subtree of `a` with a random subtree of `b`. Retries a
/// bounded number of times to respect the depth/size caps, else returns `a`.
ExprTree crossover(const ExprTree& a, const ExprTree& b, Rng& rng, const GpConfig& config);

/// Point change, constant jitter or subtree replacement (chosen uniformly),
/// subject to the same caps as crossover.
ExprTree mutate(const ExprTree& expr, Rng& rng, const GpConfig& config, int dimension);

/// Keeps the non-dominated entries of `candidates`.
ParetoFront pareto_front(std::vector<ParetoEntry> candidates);

/// Levenberg-Marquardt fit of the constants to the targets; never returns
/// a higher MSE than the input.
ExprTree refine_constants(const ExprTree& expr, const SrDataset& data, std::size_t max_evaluations);

/// Generational GP with tournament selection and elitism.
GpResult evolve(const SrDataset& data, const GpConfig& config);

/// Front entry minimizing loss + parsimony * complexity (ties: simpler).
const ParetoEntry& select_best(const ParetoFront& front, double parsimony);

}  // namespace msd
