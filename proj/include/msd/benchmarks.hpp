#pragma once

#include "msd/expr.hpp"
#include "msd/ode.hpp"

#include <filesystem>

namespace msd {

/// Rate constants of the 7-species glycolytic oscillator. `Npool` is the
/// total NAD pool and `A` the total adenine pool.
struct GlycolyticParams {
  double J0 = 2.5;
  double k1 = 100.0;
  double k2 = 6.0;
  double k3 = 16.0;
  double k4 = 100.0;
  double k5 = 1.28;
  double k6 = 12.0;
  double K1 = 0.52;
  double q = 4.0;
  double Npool = 1.0;
  double A = 4.0;
  double kappa = 13.0;
  double psi = 0.1;
  double k = 1.8;

  /// K1 > 0, q > 0, every rate constant >= 0, all finite.
  void validate() const;
  /// Checks the combinations that the published reference expressions pin
  /// down (J0, k1, K1, q, psi*kappa, psi*kappa + k, k2*Npool, k2 + k6).
  void validate_reference_constraints(double tolerance = 1e-9) const;
};

struct GlycolyticBenchmark {
  GlycolyticParams params;
  StateVector x0;
};

inline constexpr Eigen::Index kGlycolyticDimension = 7;

StateVector glycolytic_rhs(const GlycolyticParams& params, const StateVector& x);
OdeSystem glycolytic_system(const GlycolyticParams& params);

/// Reads the 14 parameters and `x0` from a key = value file; both
/// `validate` and `validate_reference_constraints` run on load.
GlycolyticBenchmark load_glycolytic_benchmark(const std::filesystem::path& path);

/// Right-hand side of component `component` (0-based) as an expression
/// tree with the parameter values substituted. Requires an integer q in
/// [2, 8].
ExprTree glycolytic_reference(const GlycolyticParams& params, int component);

/// dx/dt = A x.
OdeSystem linear_system(const Eigen::MatrixXd& A, std::string name = "linear");

/// Row `component` of A x as an expression tree.
ExprTree linear_reference(const Eigen::MatrixXd& A, int component);

}  // namespace msd
