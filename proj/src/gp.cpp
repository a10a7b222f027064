#include "msd/gp.hpp"

#include "msd/errors.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace msd {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr int kCapRetries = 10;

double uniform01(Rng& rng) { return boost::random::uniform_01<double>()(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(rng); }

double mse_with(BatchEvaluator& evaluator, Eigen::ArrayXd& scratch, const ExprTree& expr,
                const SrDataset& data) {
  if (!evaluator.evaluate(expr, scratch)) return kInfinity;
  const double value = (scratch - data.targets.array()).square().mean();
  return std::isfinite(value) ? value : kInfinity;
}

// Least-squares a + b * values against the targets. Returns the residual.
Eigen::VectorXd scaled_residual(const Eigen::ArrayXd& values, const Eigen::VectorXd& targets, double& a, double& b) {
  const double values_mean = values.mean();
  const double targets_mean = targets.mean();
  const Eigen::ArrayXd centered = values - values_mean;
  const double spread = centered.square().sum();
  const double floor = 1e-24 * static_cast<double>(values.size()) * std::max(1.0, values_mean * values_mean);
  b = spread > floor ? (centered * (targets.array() - targets_mean)).sum() / spread : 0.0;
  a = targets_mean - b * values_mean;
  return ((a + b * values) - targets.array()).matrix();
}

std::size_t scaled_complexity(std::size_t complexity, double a, double b) {
  if (b == 0.0) return 1;
  return complexity + (b != 1.0 ? 2 : 0) + (a != 0.0 ? 2 : 0);
}

ExprTree apply_scaling(const ExprTree& e, double a, double b) {
  if (b == 0.0) return ExprTree::constant(a);
  ExprTree scaled = b == 1.0 ? e : ExprTree::binary(Op::Mul, ExprTree::constant(b), e);
  return a == 0.0 ? scaled : ExprTree::binary(Op::Add, ExprTree::constant(a), scaled);
}

bool within_caps(const ExprTree& e, const GpConfig& config) {
  return e.depth() <= config.max_depth && e.size() <= config.max_size;
}

Op random_function(Rng& rng) {
  // Weights: + - * / at 1, pow at 1/2.
  const double r = uniform01(rng) * 4.5;
  if (r < 1.0) return Op::Add;
  if (r < 2.0) return Op::Sub;
  if (r < 3.0) return Op::Mul;
  if (r < 4.0) return Op::Div;
  return Op::Pow;
}

ExprNode random_terminal(Rng& rng, const GpConfig& config, int dimension) {
  if (uniform01(rng) < config.variable_probability) {
    return ExprNode{Op::Variable, uniform_int(rng, 0, dimension - 1), 0.0};
  }
  const double c = boost::random::uniform_real_distribution<double>(config.constant_min, config.constant_max)(rng);
  return ExprNode{Op::Constant, 0, c};
}

void grow(std::vector<ExprNode>& out, Rng& rng, const GpConfig& config, int dimension, int depth_left,
          bool full) {
  const bool function = depth_left > 1 && (full || uniform01(rng) < 0.5);
  if (!function) {
    out.push_back(random_terminal(rng, config, dimension));
    return;
  }
  const Op op = random_function(rng);
  if (op == Op::Pow) {
    out.push_back(ExprNode{Op::Pow, uniform_int(rng, kMinPowerExponent, config.max_power), 0.0});
    grow(out, rng, config, dimension, depth_left - 1, full);
    return;
  }
  out.push_back(ExprNode{op, 0, 0.0});
  grow(out, rng, config, dimension, depth_left - 1, full);
  grow(out, rng, config, dimension, depth_left - 1, full);
}

// Picks a node, preferring internal nodes 90% of the time when any exist.
std::size_t pick_node(const ExprTree& e, Rng& rng) {
  const auto& nodes = e.nodes();
  std::vector<std::size_t> internal;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (arity(nodes[i].op) > 0) internal.push_back(i);
  }
  if (!internal.empty() && uniform01(rng) < 0.9) return internal[uniform_index(rng, internal.size())];
  std::vector<std::size_t> leaves;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (arity(nodes[i].op) == 0) leaves.push_back(i);
  }
  return leaves[uniform_index(rng, leaves.size())];
}

ExprTree point_mutation(const ExprTree& expr, Rng& rng, const GpConfig& config, int dimension) {
  std::vector<ExprNode> nodes = expr.nodes();
  ExprNode& n = nodes[uniform_index(rng, nodes.size())];
  switch (n.op) {
    case Op::Constant:
    case Op::Variable: n = random_terminal(rng, config, dimension); break;
    case Op::Pow:
      if (config.max_power > kMinPowerExponent) {
        int e = n.index;
        while (e == n.index) e = uniform_int(rng, kMinPowerExponent, config.max_power);
        n.index = e;
      }
      break;
    default: {
      static constexpr Op kBinary[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
      Op op = n.op;
      while (op == n.op) op = kBinary[uniform_index(rng, 4)];
      n.op = op;
    }
  }
  return ExprTree(std::move(nodes));
}

ExprTree constant_jitter(const ExprTree& expr, Rng& rng, const GpConfig& config) {
  std::vector<ExprNode> nodes = expr.nodes();
  std::vector<std::size_t> constants;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].op == Op::Constant) constants.push_back(i);
  }
  ExprNode& n = nodes[constants[uniform_index(rng, constants.size())]];
  const double sd = config.constant_mutation_scale * std::max(std::abs(n.value), 1.0);
  n.value += boost::random::normal_distribution<double>(0.0, sd)(rng);
  return ExprTree(std::move(nodes));
}

ExprTree subtree_mutation(const ExprTree& expr, Rng& rng, const GpConfig& config, int dimension) {
  const std::size_t at = uniform_index(rng, expr.size());
  const int depth = uniform_int(rng, 1, std::max(1, config.mutation_max_depth));
  return expr.replace_subtree(at, random_tree(rng, config, dimension, depth, false));
}

bool better(double fa, std::size_t ca, double fb, std::size_t cb) {
  if (fa != fb) return fa < fb;
  return ca < cb;
}

}  // namespace

void SrDataset::validate() const {
  if (inputs.cols() < 1) throw InvalidInputError("symbolic regression needs at least one sample");
  if (inputs.rows() < 1) throw InvalidInputError("symbolic regression inputs need dimension >= 1");
  if (targets.size() != inputs.cols()) throw InvalidInputError("targets and inputs have different sample counts");
  if (!inputs.allFinite() || !targets.allFinite()) throw InvalidInputError("regression data must be finite");
}

void GpConfig::validate() const {
  auto probability = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInputError(std::string(name) + " must lie in [0, 1]");
  };
  probability(crossover_probability, "crossover probability");
  probability(mutation_probability, "mutation probability");
  probability(variable_probability, "variable probability");
  probability(offspring_refine_probability, "offspring refine probability");
  if (crossover_probability + mutation_probability > 1.0 + 1e-12) {
    throw InvalidInputError("crossover and mutation probabilities must sum to <= 1");
  }
  if (population_size < 2) throw InvalidInputError("population size must be >= 2");
  if (tournament_size < 1) throw InvalidInputError("tournament size must be >= 1");
  if (elite_count >= population_size) throw InvalidInputError("elite count must be below the population size");
  if (!(parsimony >= 0.0)) throw InvalidInputError("parsimony coefficient must be >= 0");
  if (!(constant_mutation_scale >= 0.0)) throw InvalidInputError("constant mutation scale must be >= 0");
  if (max_depth < 1 || max_size < 1) throw InvalidInputError("tree caps must be >= 1");
  if (init_min_depth < 1 || init_max_depth < init_min_depth || init_max_depth > max_depth) {
    throw InvalidInputError("initial depth range must satisfy 1 <= min <= max <= max_depth");
  }
  if (!(constant_min <= constant_max)) throw InvalidInputError("constant range is empty");
  if (max_power < kMinPowerExponent || max_power > kMaxPowerExponent) {
    throw InvalidInputError("max power must lie in [2, 8]");
  }
}

double mse(const ExprTree& expr, const SrDataset& data) {
  BatchEvaluator evaluator(data.inputs);
  Eigen::ArrayXd scratch;
  return mse_with(evaluator, scratch, expr, data);
}

double fitness(const ExprTree& expr, const SrDataset& data, double parsimony) {
  if (data.samples() < 1) throw InvalidInputError("fitness needs a non-empty dataset");
  const double loss = mse(expr, data);
  if (!std::isfinite(loss)) return kInfinity;
  return loss + parsimony * static_cast<double>(expr.complexity());
}

ExprTree random_tree(Rng& rng, const GpConfig& config, int dimension, int max_depth, bool full) {
  if (dimension < 1) throw InvalidInputError("random trees need dimension >= 1");
  std::vector<ExprNode> nodes;
  grow(nodes, rng, config, dimension, std::max(1, max_depth), full);
  return ExprTree(std::move(nodes));
}

ExprTree crossover(const ExprTree& a, const ExprTree& b, Rng& rng, const GpConfig& config) {
  for (int attempt = 0; attempt < kCapRetries; ++attempt) {
    const std::size_t at = pick_node(a, rng);
    const std::size_t from = pick_node(b, rng);
    ExprTree child = a.replace_subtree(at, b.subtree(from));
    if (within_caps(child, config)) return child;
  }
  return a;
}

ExprTree mutate(const ExprTree& expr, Rng& rng, const GpConfig& config, int dimension) {
  for (int attempt = 0; attempt < kCapRetries; ++attempt) {
    const int kind = uniform_int(rng, 0, 2);
    ExprTree child = expr;
    if (kind == 0) {
      child = point_mutation(expr, rng, config, dimension);
    } else if (kind == 1 && !expr.constants().empty()) {
      child = constant_jitter(expr, rng, config);
    } else {
      child = subtree_mutation(expr, rng, config, dimension);
    }
    if (within_caps(child, config)) return child;
  }
  return expr;
}

ParetoFront pareto_front(std::vector<ParetoEntry> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const ParetoEntry& x, const ParetoEntry& y) {
    if (x.complexity != y.complexity) return x.complexity < y.complexity;
    return x.loss < y.loss;
  });
  ParetoFront front;
  double best = kInfinity;
  for (auto& c : candidates) {
    if (!std::isfinite(c.loss) || !(c.loss < best)) continue;
    if (!front.empty() && front.back().complexity == c.complexity) continue;
    best = c.loss;
    front.push_back(std::move(c));
  }
  return front;
}

namespace {

// Levenberg-Marquardt on the constants with a forward-difference Jacobian.
// With `scaled`, the residual is taken after the optimal affine rescaling
// of the expression.
ExprTree refine_with(BatchEvaluator& evaluator, const ExprTree& expr, const SrDataset& data,
                     std::size_t max_evaluations, bool scaled = false) {
  std::vector<double> constants = expr.constants();
  const auto p = static_cast<Eigen::Index>(constants.size());
  if (p == 0 || max_evaluations == 0) return expr;
  const Eigen::Index k = data.samples();
  Eigen::ArrayXd values;
  auto residual_of = [&](const Eigen::ArrayXd& v) -> Eigen::VectorXd {
    if (!scaled) return (v - data.targets.array()).matrix();
    double a = 0.0;
    double b = 0.0;
    return scaled_residual(v, data.targets, a, b);
  };
  if (!evaluator.evaluate(expr, values)) return expr;
  Eigen::VectorXd residual = residual_of(values);
  double best = residual.squaredNorm();
  if (!std::isfinite(best)) return expr;
  std::size_t evaluations = 1;
  double damping = 1e-3;
  Eigen::MatrixXd jacobian(k, p);
  while (evaluations + static_cast<std::size_t>(p) + 1 <= max_evaluations) {
    bool jacobian_ok = true;
    for (Eigen::Index i = 0; i < p && jacobian_ok; ++i) {
      std::vector<double> shifted = constants;
      const double h = 1e-7 * std::max(std::abs(constants[static_cast<std::size_t>(i)]), 1.0);
      shifted[static_cast<std::size_t>(i)] += h;
      ++evaluations;
      jacobian_ok = evaluator.evaluate(expr.with_constants(shifted), values);
      if (jacobian_ok) jacobian.col(i) = (residual_of(values) - residual) / h;
    }
    if (!jacobian_ok || !jacobian.allFinite()) break;
    const Eigen::MatrixXd normal = jacobian.transpose() * jacobian;
    const Eigen::VectorXd gradient = jacobian.transpose() * residual;
    bool improved = false;
    while (evaluations < max_evaluations && damping < 1e12) {
      Eigen::MatrixXd damped = normal;
      damped.diagonal().array() += damping * (normal.diagonal().array() + 1e-12);
      const Eigen::VectorXd delta = damped.ldlt().solve(-gradient);
      std::vector<double> trial = constants;
      for (Eigen::Index i = 0; i < p; ++i) trial[static_cast<std::size_t>(i)] += delta[i];
      ++evaluations;
      if (delta.allFinite() && evaluator.evaluate(expr.with_constants(trial), values)) {
        const Eigen::VectorXd r = residual_of(values);
        const double loss = r.squaredNorm();
        if (std::isfinite(loss) && loss < best) {
          const bool converged = best - loss <= 1e-12 * best;
          best = loss;
          constants = std::move(trial);
          residual = r;
          damping = std::max(damping / 3.0, 1e-12);
          improved = !converged;
          break;
        }
      }
      damping *= 4.0;
    }
    if (!improved) break;
  }
  return expr.with_constants(constants);
}

}  // namespace

ExprTree refine_constants(const ExprTree& expr, const SrDataset& data, std::size_t max_evaluations) {
  BatchEvaluator evaluator(data.inputs);
  return refine_with(evaluator, expr, data, max_evaluations);
}

GpResult evolve(const SrDataset& data, const GpConfig& config) {
  data.validate();
  config.validate();
  const int dimension = static_cast<int>(data.dimension());
  Rng rng(config.seed);
  BatchEvaluator evaluator(data.inputs);
  Eigen::ArrayXd scratch;

  // With linear scaling, `loss` and `complexity` describe a + b * expr.
  struct Individual {
    ExprTree expr;
    double loss;
    double fitness;
    std::size_t complexity;
    double a;
    double b;
  };
  auto score = [&](ExprTree e) {
    const std::size_t raw_complexity = e.complexity();
    if (!evaluator.evaluate(e, scratch)) return Individual{std::move(e), kInfinity, kInfinity, raw_complexity, 0.0, 1.0};
    const auto samples = static_cast<double>(data.samples());
    const Eigen::ArrayXd& y = data.targets.array();
    struct Variant {
      double a;
      double b;
    };
    std::vector<Variant> variants{{0.0, 1.0}};
    if (config.linear_scaling) {
      const double ff = scratch.square().sum();
      variants.push_back({(y - scratch).mean(), 1.0});
      variants.push_back({0.0, ff > 0.0 ? (scratch * y).sum() / ff : 0.0});
      double a = 0.0;
      double b = 0.0;
      scaled_residual(scratch, data.targets, a, b);
      variants.push_back({a, b});
    }
    Individual best{ExprTree::constant(0.0), kInfinity, kInfinity, raw_complexity, 0.0, 1.0};
    for (const Variant& v : variants) {
      const double loss = ((v.a + v.b * scratch) - y).square().sum() / samples;
      if (!std::isfinite(loss)) continue;
      const std::size_t complexity = scaled_complexity(raw_complexity, v.a, v.b);
      const double fit = loss + config.parsimony * static_cast<double>(complexity);
      const double tolerance = std::isfinite(best.fitness) ? 1e-9 * std::abs(best.fitness) : 0.0;
      const bool wins = !std::isfinite(best.fitness) || fit < best.fitness - tolerance ||
                        (fit <= best.fitness + tolerance && complexity < best.complexity);
      if (wins) {
        best.loss = loss;
        best.fitness = fit;
        best.complexity = complexity;
        best.a = v.a;
        best.b = v.b;
      }
    }
    best.expr = std::move(e);
    return best;
  };


  std::vector<Individual> population;
  population.reserve(config.population_size);
  const int depth_span = config.init_max_depth - config.init_min_depth + 1;
  for (std::size_t i = 0; i < config.population_size; ++i) {
    // Ramped half-and-half.
    const int depth = config.init_min_depth + static_cast<int>(i % static_cast<std::size_t>(depth_span));
    const bool full = (i / static_cast<std::size_t>(depth_span)) % 2 == 0;
    ExprTree tree = random_tree(rng, config, dimension, depth, full);
    if (!within_caps(tree, config)) tree = random_tree(rng, config, dimension, config.init_min_depth, false);
    population.push_back(score(std::move(tree)));
  }

  std::map<std::size_t, ParetoEntry> hall_of_fame;
  GpResult result;
  auto record = [&]() {
    double best = kInfinity;
    for (const auto& ind : population) {
      best = std::min(best, ind.fitness);
      if (!std::isfinite(ind.loss)) continue;
      auto it = hall_of_fame.find(ind.complexity);
      if (it == hall_of_fame.end() || ind.loss < it->second.loss) {
        ExprTree shown = apply_scaling(ind.expr, ind.a, ind.b);
        hall_of_fame.insert_or_assign(ind.complexity, ParetoEntry{shown.complexity(), ind.loss, std::move(shown)});
      }
    }
    result.best_fitness_history.push_back(best);
    return best;
  };

  auto offspring = [&](ExprTree e) {
    if (config.offspring_refine_probability > 0.0 && uniform01(rng) < config.offspring_refine_probability) {
      e = refine_with(evaluator, e, data, config.offspring_refine_evaluations, config.linear_scaling);
    }
    return score(std::move(e));
  };

  auto tournament = [&]() -> const Individual& {
    std::size_t winner = uniform_index(rng, population.size());
    for (std::size_t k = 1; k < config.tournament_size; ++k) {
      const std::size_t c = uniform_index(rng, population.size());
      const auto& a = population[c];
      const auto& w = population[winner];
      if (better(a.fitness, a.complexity, w.fitness, w.complexity)) winner = c;
    }
    return population[winner];
  };

  double best = record();
  for (std::size_t g = 0; g < config.generations; ++g) {
    if (best <= config.early_stop_fitness) break;
    std::vector<std::size_t> order(population.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.elite_count), order.end(),
                      [&](std::size_t x, std::size_t y) {
                        const auto& a = population[x];
                        const auto& b = population[y];
                        if (a.fitness != b.fitness) return a.fitness < b.fitness;
                        if (a.complexity != b.complexity) return a.complexity < b.complexity;
                        return x < y;
                      });
    std::vector<Individual> next;
    next.reserve(population.size());
    for (std::size_t e = 0; e < config.elite_count; ++e) next.push_back(population[order[e]]);
    while (next.size() < population.size()) {
      const double r = uniform01(rng);
      if (r < config.crossover_probability) {
        const Individual& a = tournament();
        const Individual& b = tournament();
        next.push_back(offspring(crossover(a.expr, b.expr, rng, config)));
      } else if (r < config.crossover_probability + config.mutation_probability) {
        next.push_back(offspring(mutate(tournament().expr, rng, config, dimension)));
      } else {
        next.push_back(tournament());
      }
    }
    population = std::move(next);
    best = record();
    ++result.generations_run;
  }

  std::vector<ParetoEntry> candidates;
  for (auto& [complexity, entry] : hall_of_fame) candidates.push_back(entry);
  ParetoFront front = pareto_front(candidates);
  if (config.refine_constants) {
    for (const auto& entry : front) {
      ExprTree refined = refine_with(evaluator, entry.expr, data, config.refine_max_evaluations);
      const double loss = mse_with(evaluator, scratch, refined, data);
      candidates.push_back(ParetoEntry{refined.complexity(), loss, std::move(refined)});
    }
    front = pareto_front(std::move(candidates));
  }
  result.front = std::move(front);
  return result;
}

const ParetoEntry& select_best(const ParetoFront& front, double parsimony) {
  if (front.empty()) throw InvalidInputError("cannot select from an empty Pareto front");
  std::size_t best = 0;
  double best_score = kInfinity;
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double s = front[i].loss + parsimony * static_cast<double>(front[i].complexity);
    if (s < best_score) {
      best_score = s;
      best = i;
    }
  }
  return front[best];
}

}  // namespace msd
