#pragma once

#include "msd/ode.hpp"

#include <string>
#include <string_view>

namespace msd {

enum class SchemeFamily { AdamsMoulton, AdamsBashforth, BDF };

std::string_view to_string(SchemeFamily family);
/// Accepts "am", "ab", "bdf" (case-insensitive) and the full family names.
SchemeFamily parse_scheme_family(std::string_view name);

/// Coefficients of an M-step method written as
///   sum_{m=0..M} [ alpha_m x_{n-m} + dt * beta_m f(x_{n-m}) ] = 0,
/// normalized to alpha_0 = 1. Relative to the textbook form
/// sum alpha x = dt sum beta f, beta carries the opposite sign.
struct SchemeCoefficients {
  int steps = 0;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  int order = 0;
  SchemeFamily family = SchemeFamily::AdamsMoulton;
};

inline constexpr int kMaxSchemeSteps = 5;

/// Implicit Adams family, order M + 1.
SchemeCoefficients adams_moulton(int steps);
/// Explicit Adams family (beta_0 = 0), order M.
SchemeCoefficients adams_bashforth(int steps);
/// Backward differentiation (beta_m = 0 for m >= 1), order M.
SchemeCoefficients bdf(int steps);
SchemeCoefficients make_scheme(SchemeFamily family, int steps);

/// y_n for a single index n in [M, N].
StateVector residual(const SchemeCoefficients& coeffs, const Trajectory& traj, const RhsFunction& f,
                     Eigen::Index n);

/// All residuals at once from precomputed derivatives: column j holds y_{M+j}.
/// `states` and `derivatives` are D x (N + 1).
Eigen::MatrixXd residual_matrix(const SchemeCoefficients& coeffs, const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& derivatives, double dt);

/// (1 / (N - M + 1)) * sum_{n=M..N} |y_n|^2.
double mse_loss(const SchemeCoefficients& coeffs, const Trajectory& traj, const RhsFunction& f);

}  // namespace msd
