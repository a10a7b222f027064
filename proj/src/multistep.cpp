#include "msd/multistep.hpp"

#include "msd/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace msd {

namespace {

void check_steps(int steps) {
  if (steps < 1 || steps > kMaxSchemeSteps) {
    throw UnsupportedSchemeError("multistep schemes support 1 <= M <= " + std::to_string(kMaxSchemeSteps) +
                                 ", got M = " + std::to_string(steps));
  }
}

// Entry k of the order conditions for the polynomial x(t) = t^k sampled at
// t_{n-m} = -m (unit step):  sum alpha_m (-m)^k + k beta_m (-m)^(k-1) = 0.
double power(double base, int exponent) {
  if (exponent == 0) return 1.0;
  return std::pow(base, exponent);
}

double alpha_coefficient(int m, int k) { return power(-static_cast<double>(m), k); }

double beta_coefficient(int m, int k) {
  if (k == 0) return 0.0;
  return static_cast<double>(k) * power(-static_cast<double>(m), k - 1);
}

}  // namespace

std::string_view to_string(SchemeFamily family) {
  switch (family) {
    case SchemeFamily::AdamsMoulton: return "am";
    case SchemeFamily::AdamsBashforth: return "ab";
    case SchemeFamily::BDF: return "bdf";
  }
  return "?";
}

SchemeFamily parse_scheme_family(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "am" || lower == "adams-moulton" || lower == "adamsmoulton") return SchemeFamily::AdamsMoulton;
  if (lower == "ab" || lower == "adams-bashforth" || lower == "adamsbashforth") return SchemeFamily::AdamsBashforth;
  if (lower == "bdf") return SchemeFamily::BDF;
  throw UnsupportedSchemeError("unknown multistep family '" + std::string(name) + "'");
}

SchemeCoefficients adams_moulton(int steps) {
  check_steps(steps);
  const int M = steps;
  SchemeCoefficients c{M, Eigen::VectorXd::Zero(M + 1), Eigen::VectorXd::Zero(M + 1), M + 1,
                       SchemeFamily::AdamsMoulton};
  c.alpha[0] = 1.0;
  c.alpha[1] = -1.0;
  // Unknowns beta_0..beta_M; conditions k = 1..M+1.
  Eigen::MatrixXd lhs(M + 1, M + 1);
  Eigen::VectorXd rhs(M + 1);
  for (int k = 1; k <= M + 1; ++k) {
    double known = 0.0;
    for (int m = 0; m <= M; ++m) known += c.alpha[m] * alpha_coefficient(m, k);
    for (int m = 0; m <= M; ++m) lhs(k - 1, m) = beta_coefficient(m, k);
    rhs[k - 1] = -known;
  }
  c.beta = lhs.fullPivLu().solve(rhs);
  return c;
}

SchemeCoefficients adams_bashforth(int steps) {
  check_steps(steps);
  const int M = steps;
  SchemeCoefficients c{M, Eigen::VectorXd::Zero(M + 1), Eigen::VectorXd::Zero(M + 1), M,
                       SchemeFamily::AdamsBashforth};
  c.alpha[0] = 1.0;
  c.alpha[1] = -1.0;
  // Unknowns beta_1..beta_M; conditions k = 1..M.
  Eigen::MatrixXd lhs(M, M);
  Eigen::VectorXd rhs(M);
  for (int k = 1; k <= M; ++k) {
    double known = 0.0;
    for (int m = 0; m <= M; ++m) known += c.alpha[m] * alpha_coefficient(m, k);
    for (int m = 1; m <= M; ++m) lhs(k - 1, m - 1) = beta_coefficient(m, k);
    rhs[k - 1] = -known;
  }
  c.beta.tail(M) = lhs.fullPivLu().solve(rhs);
  return c;
}

SchemeCoefficients bdf(int steps) {
  check_steps(steps);
  const int M = steps;
  SchemeCoefficients c{M, Eigen::VectorXd::Zero(M + 1), Eigen::VectorXd::Zero(M + 1), M, SchemeFamily::BDF};
  c.alpha[0] = 1.0;
  // Unknowns alpha_1..alpha_M and beta_0; conditions k = 0..M.
  Eigen::MatrixXd lhs(M + 1, M + 1);
  Eigen::VectorXd rhs(M + 1);
  for (int k = 0; k <= M; ++k) {
    for (int m = 1; m <= M; ++m) lhs(k, m - 1) = alpha_coefficient(m, k);
    lhs(k, M) = beta_coefficient(0, k);
    rhs[k] = -alpha_coefficient(0, k);
  }
  const Eigen::VectorXd solution = lhs.fullPivLu().solve(rhs);
  c.alpha.tail(M) = solution.head(M);
  c.beta[0] = solution[M];
  return c;
}

SchemeCoefficients make_scheme(SchemeFamily family, int steps) {
  switch (family) {
    case SchemeFamily::AdamsMoulton: return adams_moulton(steps);
    case SchemeFamily::AdamsBashforth: return adams_bashforth(steps);
    case SchemeFamily::BDF: return bdf(steps);
  }
  throw UnsupportedSchemeError("unknown multistep family");
}

StateVector residual(const SchemeCoefficients& coeffs, const Trajectory& traj, const RhsFunction& f,
                     Eigen::Index n) {
  const int M = coeffs.steps;
  if (n < M || n > traj.last()) {
    throw IndexError("residual index " + std::to_string(n) + " outside [" + std::to_string(M) + ", " +
                     std::to_string(traj.last()) + "]");
  }
  StateVector y = StateVector::Zero(traj.dimension());
  for (int m = 0; m <= M; ++m) {
    const StateVector x = traj.state(n - m);
    y += coeffs.alpha[m] * x;
    if (coeffs.beta[m] != 0.0) {
      const StateVector fx = f(x);
      if (fx.size() != traj.dimension()) throw InvalidInputError("rhs output dimension mismatch");
      y += traj.dt() * coeffs.beta[m] * fx;
    }
  }
  return y;
}

Eigen::MatrixXd residual_matrix(const SchemeCoefficients& coeffs, const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& derivatives, double dt) {
  const int M = coeffs.steps;
  const Eigen::Index count = states.cols() - M;
  if (count < 1) throw InvalidInputError("trajectory needs at least M + 1 samples");
  if (derivatives.rows() != states.rows() || derivatives.cols() != states.cols()) {
    throw InvalidInputError("derivative matrix shape does not match the states");
  }
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(states.rows(), count);
  for (int m = 0; m <= M; ++m) {
    // Residual column j (index n = M + j) uses sample n - m = M - m + j.
    y.noalias() += coeffs.alpha[m] * states.middleCols(M - m, count);
    if (coeffs.beta[m] != 0.0) y.noalias() += (dt * coeffs.beta[m]) * derivatives.middleCols(M - m, count);
  }
  return y;
}

double mse_loss(const SchemeCoefficients& coeffs, const Trajectory& traj, const RhsFunction& f) {
  const int M = coeffs.steps;
  if (traj.size() < M + 1) {
    throw InvalidInputError("mse_loss needs at least " + std::to_string(M + 1) + " samples, got " +
                            std::to_string(traj.size()));
  }
  Eigen::MatrixXd derivatives(traj.dimension(), traj.size());
  for (Eigen::Index n = 0; n < traj.size(); ++n) {
    StateVector fx = f(traj.state(n));
    if (fx.size() != traj.dimension()) throw InvalidInputError("rhs output dimension mismatch");
    derivatives.col(n) = fx;
  }
  const Eigen::MatrixXd y = residual_matrix(coeffs, traj.states(), derivatives, traj.dt());
  double total = 0.0;
  for (Eigen::Index j = 0; j < y.cols(); ++j) total += y.col(j).squaredNorm();
  return total / static_cast<double>(y.cols());
}

}  // namespace msd
