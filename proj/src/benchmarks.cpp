#include "msd/benchmarks.hpp"

#include "msd/errors.hpp"
#include "msd/key_value.hpp"

#include <cmath>
#include <string>

namespace msd {

void GlycolyticParams::validate() const {
  const std::pair<const char*, double> rates[] = {
      {"J0", J0}, {"k1", k1}, {"k2", k2},       {"k3", k3},   {"k4", k4},   {"k5", k5}, {"k6", k6},
      {"K1", K1}, {"q", q},   {"Npool", Npool}, {"A", A},     {"kappa", kappa}, {"psi", psi}, {"k", k}};
  for (const auto& [name, value] : rates) {
    if (!std::isfinite(value)) throw InvalidInputError(std::string("parameter ") + name + " is not finite");
    if (value < 0.0) throw InvalidInputError(std::string("parameter ") + name + " must be >= 0");
  }
  if (!(K1 > 0.0)) throw InvalidInputError("parameter K1 must be > 0");
  if (!(q > 0.0)) throw InvalidInputError("parameter q must be > 0");
}

void GlycolyticParams::validate_reference_constraints(double tolerance) const {
  auto expect = [tolerance](const char* what, double actual, double wanted) {
    if (std::abs(actual - wanted) > tolerance * std::max(1.0, std::abs(wanted))) {
      throw InvalidInputError(std::string("glycolytic parameters violate ") + what + " = " +
                              std::to_string(wanted) + " (got " + std::to_string(actual) + ")");
    }
  };
  expect("J0", J0, 2.5);
  expect("k1", k1, 100.0);
  expect("K1", K1, 0.52);
  expect("q", q, 4.0);
  expect("psi*kappa", psi * kappa, 1.3);
  expect("psi*kappa + k", psi * kappa + k, 3.1);
  expect("k2*Npool", k2 * Npool, 6.0);
  expect("k2 + k6", k2 + k6, 18.0);
}

StateVector glycolytic_rhs(const GlycolyticParams& p, const StateVector& x) {
  if (x.size() != kGlycolyticDimension) {
    throw InvalidInputError("glycolytic state must have 7 components, got " + std::to_string(x.size()));
  }
  const double S1 = x[0], S2 = x[1], S3 = x[2], S4 = x[3], S5 = x[4], S6 = x[5], S7 = x[6];

  const double inhibition = 1.0 + std::pow(S6 / p.K1, p.q);
  const double v1 = p.k1 * S1 * S6 / inhibition;
  const double v2 = p.k2 * S2 * (p.Npool - S5);
  // Both the S3 and the S6 equations use the adenine pool (A - S6).
  const double v3 = p.k3 * S3 * (p.A - S6);
  const double v4 = p.k4 * S4 * S5;
  const double v5 = p.k5 * S6;
  const double v6 = p.k6 * S2 * S5;
  const double flux = p.kappa * (S4 - S7);

  StateVector dx(kGlycolyticDimension);
  dx[0] = p.J0 - v1;
  dx[1] = 2.0 * v1 - v2 - v6;
  dx[2] = v2 - v3;
  dx[3] = v3 - v4 - flux;
  dx[4] = v2 - v4 - v6;
  dx[5] = -2.0 * v1 + 2.0 * v3 - v5;
  dx[6] = p.psi * flux - p.k * S7;

  for (Eigen::Index i = 0; i < dx.size(); ++i) {
    if (!std::isfinite(dx[i])) {
      throw NumericError("glycolytic right-hand side is not finite in component S" + std::to_string(i + 1),
                         static_cast<int>(i));
    }
  }
  return dx;
}

OdeSystem glycolytic_system(const GlycolyticParams& params) {
  params.validate();
  return OdeSystem{kGlycolyticDimension,
                   [params](const StateVector& x) { return glycolytic_rhs(params, x); }, "glycolytic"};
}

GlycolyticBenchmark load_glycolytic_benchmark(const std::filesystem::path& path) {
  const KeyValueFile file = KeyValueFile::load(path);
  GlycolyticBenchmark bench;
  GlycolyticParams& p = bench.params;
  p.J0 = file.require_double("J0");
  p.k1 = file.require_double("k1");
  p.k2 = file.require_double("k2");
  p.k3 = file.require_double("k3");
  p.k4 = file.require_double("k4");
  p.k5 = file.require_double("k5");
  p.k6 = file.require_double("k6");
  p.K1 = file.require_double("K1");
  p.q = file.require_double("q");
  p.Npool = file.require_double("Npool");
  p.A = file.require_double("A");
  p.kappa = file.require_double("kappa");
  p.psi = file.require_double("psi");
  p.k = file.require_double("k");
  p.validate();
  p.validate_reference_constraints();

  const std::vector<double> x0 = file.require_doubles("x0");
  if (static_cast<Eigen::Index>(x0.size()) != kGlycolyticDimension) {
    throw InvalidInputError("x0 must list 7 initial concentrations");
  }
  bench.x0 = Eigen::Map<const StateVector>(x0.data(), kGlycolyticDimension);
  return bench;
}

OdeSystem linear_system(const Eigen::MatrixXd& A, std::string name) {
  if (A.rows() != A.cols() || A.rows() == 0) throw InvalidInputError("linear system matrix must be square");
  return OdeSystem{A.rows(), [A](const StateVector& x) -> StateVector { return A * x; }, std::move(name)};
}

}  // namespace msd

namespace msd {

ExprTree glycolytic_reference(const GlycolyticParams& p, int component) {
  const double q_rounded = std::round(p.q);
  if (q_rounded != p.q || q_rounded < kMinPowerExponent || q_rounded > kMaxPowerExponent) {
    throw InvalidInputError("glycolytic reference expressions need an integer Hill exponent q in [2, 8]");
  }
  auto c = [](double v) { return "(" + format_double(v) + ")"; };
  const std::string q = std::to_string(static_cast<int>(q_rounded));
  const std::string v1 = c(p.k1) + "*S1*S6/(1 + (S6/" + c(p.K1) + ")^" + q + ")";
  const std::string v2 = c(p.k2) + "*S2*(" + c(p.Npool) + " - S5)";
  const std::string v3 = c(p.k3) + "*S3*(" + c(p.A) + " - S6)";
  const std::string v4 = c(p.k4) + "*S4*S5";
  const std::string v6 = c(p.k6) + "*S2*S5";
  const std::string flux = c(p.kappa) + "*(S4 - S7)";
  std::string text;
  switch (component) {
    case 0: text = c(p.J0) + " - " + v1; break;
    case 1: text = "2*" + v1 + " - " + v2 + " - " + v6; break;
    case 2: text = v2 + " - " + v3; break;
    case 3: text = v3 + " - " + v4 + " - " + flux; break;
    case 4: text = v2 + " - " + v4 + " - " + v6; break;
    case 5: text = "-2*" + v1 + " + 2*" + v3 + " - " + c(p.k5) + "*S6"; break;
    case 6: text = c(p.psi) + "*" + flux + " - " + c(p.k) + "*S7"; break;
    default: throw InvalidInputError("glycolytic component index must be in [0, 6]");
  }
  return parse_infix(text);
}

ExprTree linear_reference(const Eigen::MatrixXd& A, int component) {
  if (component < 0 || component >= A.rows()) throw InvalidInputError("component index out of range");
  std::string text;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    if (A(component, j) == 0.0) continue;
    if (!text.empty()) text += " + ";
    const std::string var = variable_name(static_cast<int>(j));
    text += A(component, j) == 1.0 ? var : "(" + format_double(A(component, j)) + ")*" + var;
  }
  return parse_infix(text.empty() ? "0" : text);
}

}  // namespace msd
