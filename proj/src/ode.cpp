#include "msd/ode.hpp"

#include "msd/errors.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <string>

namespace msd {

namespace {

int first_non_finite(const StateVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

Trajectory::Trajectory(double t0, double dt, Eigen::MatrixXd states)
    : t0_(t0), dt_(dt), states_(std::move(states)) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
    throw InvalidInputError("trajectory step dt must be positive and finite");
  }
  if (!std::isfinite(t0_)) throw InvalidInputError("trajectory start time must be finite");
  if (states_.cols() < 1 || states_.rows() < 1) {
    throw InvalidInputError("trajectory needs at least one sample of dimension >= 1");
  }
  if (!states_.allFinite()) throw InvalidInputError("trajectory contains non-finite states");
}

bool Trajectory::operator==(const Trajectory& other) const {
  return t0_ == other.t0_ && dt_ == other.dt_ && states_.rows() == other.states_.rows() &&
         states_.cols() == other.states_.cols() && states_ == other.states_;
}

StateVector OdeSystem::operator()(const StateVector& x) const {
  if (x.size() != dimension) {
    throw InvalidInputError("state has dimension " + std::to_string(x.size()) + ", system '" + name +
                            "' expects " + std::to_string(dimension));
  }
  StateVector out = rhs(x);
  if (out.size() != dimension) {
    throw InvalidInputError("right-hand side of '" + name + "' returned dimension " +
                            std::to_string(out.size()));
  }
  return out;
}

StateVector rk4_step(const OdeSystem& sys, const StateVector& x, double dt) {
  if (!(dt > 0.0)) throw InvalidInputError("rk4_step requires dt > 0");
  auto checked = [](StateVector v, const char* stage) {
    if (int bad = first_non_finite(v); bad >= 0) {
      throw NumericError(std::string("non-finite value in RK4 stage ") + stage + ", component " +
                             std::to_string(bad),
                         bad);
    }
    return v;
  };
  const StateVector k1 = checked(sys(x), "k1");
  const StateVector k2 = checked(sys(x + 0.5 * dt * k1), "k2");
  const StateVector k3 = checked(sys(x + 0.5 * dt * k2), "k3");
  const StateVector k4 = checked(sys(x + dt * k3), "k4");
  return checked(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), "update");
}

Trajectory simulate(const OdeSystem& sys, const StateVector& x0, double t0, double t1, double dt,
                    const SimulateOptions& options) {
  if (!(dt > 0.0)) throw InvalidInputError("simulate requires dt > 0");
  if (t1 < t0) throw InvalidInputError("simulate requires t1 >= t0");
  if (x0.size() != sys.dimension) throw InvalidInputError("initial state dimension mismatch");
  if (first_non_finite(x0) >= 0) throw InvalidInputError("initial state is not finite");
  const double ratio = (t1 - t0) / dt;
  const double steps_real = std::floor(ratio + 0.5);
  if (std::abs(ratio - steps_real) > 1e-6 * std::max(1.0, ratio)) {
    throw InvalidInputError("time span is not an integer multiple of dt");
  }
  const auto steps = static_cast<Eigen::Index>(steps_real);

  Eigen::MatrixXd states(sys.dimension, steps + 1);
  states.col(0) = x0;
  StateVector x = x0;
  for (Eigen::Index n = 1; n <= steps; ++n) {
    try {
      x = rk4_step(sys, x, dt);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("simulation diverged: ") + e.what(),
                            static_cast<std::size_t>(n));
    }
    if (x.cwiseAbs().maxCoeff() > options.overflow_guard) {
      throw DivergenceError("simulation of '" + sys.name + "' exceeded the overflow guard at step " +
                                std::to_string(n),
                            static_cast<std::size_t>(n));
    }
    states.col(n) = x;
  }
  return Trajectory(t0, dt, std::move(states));
}

Trajectory add_noise(const Trajectory& traj, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidInputError("noise sigma must be >= 0");
  if (sigma == 0.0) return traj;

  const Eigen::MatrixXd& x = traj.states();
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::VectorXd scale =
      ((x.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(x.cols()))
          .sqrt()
          .matrix() *
      sigma;

  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd noisy = x;
  for (Eigen::Index n = 0; n < x.cols(); ++n) {
    for (Eigen::Index d = 0; d < x.rows(); ++d) noisy(d, n) += scale[d] * normal(rng);
  }
  return Trajectory(traj.t0(), traj.dt(), std::move(noisy));
}

}  // namespace msd
