#pragma once

#include "msd/expr.hpp"

namespace msd {

/// sqrt( sum_i (expr(x_i) - ref(x_i))^2 / sum_i ref(x_i)^2 ) over the
/// columns of `states`. Throws UndefinedReferenceError when the reference
/// is zero on every sample and InvalidInputError when either expression
/// cannot be evaluated at some sample.
double relative_error(const ExprTree& expr, const ExprTree& reference, const Eigen::MatrixXd& states);

/// Least-squares affine model expr(x) ~ intercept + coefficients . x over
/// the sample states.
struct AffineFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  /// RMS misfit of the affine model relative to the RMS of the expression.
  double relative_residual = 0.0;
};

AffineFit affine_fit(const ExprTree& expr, const Eigen::MatrixXd& states);

}  // namespace msd
