#include "msd/sr_metrics.hpp"

#include "msd/errors.hpp"

#include <cmath>

namespace msd {

namespace {

Eigen::ArrayXd values_at(const ExprTree& expr, const Eigen::MatrixXd& states, const char* role) {
  if (expr.max_variable() >= states.rows()) {
    throw InvalidInputError(std::string(role) + " references a variable beyond the state dimension");
  }
  BatchEvaluator evaluator(states);
  Eigen::ArrayXd out;
  if (!evaluator.evaluate(expr, out)) {
    throw InvalidInputError(std::string(role) + " cannot be evaluated at every sample state");
  }
  return out;
}

}  // namespace

double relative_error(const ExprTree& expr, const ExprTree& reference, const Eigen::MatrixXd& states) {
  if (states.cols() < 1) throw InvalidInputError("relative error needs at least one sample state");
  const Eigen::ArrayXd e = values_at(expr, states, "expression");
  const Eigen::ArrayXd r = values_at(reference, states, "reference");
  const double denominator = r.square().sum();
  if (denominator == 0.0) throw UndefinedReferenceError("reference expression is zero at every sample state");
  return std::sqrt((e - r).square().sum() / denominator);
}

AffineFit affine_fit(const ExprTree& expr, const Eigen::MatrixXd& states) {
  const Eigen::Index D = states.rows();
  const Eigen::Index K = states.cols();
  if (K < D + 1) throw InvalidInputError("affine fit needs at least D + 1 sample states");
  const Eigen::VectorXd values = values_at(expr, states, "expression").matrix();
  Eigen::MatrixXd design(K, D + 1);
  design.col(0).setOnes();
  design.rightCols(D) = states.transpose();
  const Eigen::VectorXd solution = design.colPivHouseholderQr().solve(values);
  AffineFit fit;
  fit.intercept = solution[0];
  fit.coefficients = solution.tail(D);
  const double scale = values.norm();
  const double misfit = (design * solution - values).norm();
  fit.relative_residual = scale > 0.0 ? misfit / scale : misfit;
  return fit;
}

}  // namespace msd
