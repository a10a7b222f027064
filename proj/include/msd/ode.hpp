#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>

namespace msd {

using StateVector = Eigen::VectorXd;
using RhsFunction = std::function<StateVector(const StateVector&)>;

/// Uniformly sampled trajectory. Sample n sits at time t0 + n * dt and is
/// stored as column n of `states()` (D rows, N + 1 columns).
class Trajectory {
 public:
  Trajectory(double t0, double dt, Eigen::MatrixXd states);

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  double time(Eigen::Index n) const { return t0_ + static_cast<double>(n) * dt_; }
  Eigen::Index dimension() const { return states_.rows(); }
  Eigen::Index size() const { return states_.cols(); }
  /// Index of the last sample (N).
  Eigen::Index last() const { return states_.cols() - 1; }
  const Eigen::MatrixXd& states() const { return states_; }
  StateVector state(Eigen::Index n) const { return states_.col(n); }

  bool operator==(const Trajectory& other) const;

 private:
  double t0_;
  double dt_;
  Eigen::MatrixXd states_;
};

struct OdeSystem {
  Eigen::Index dimension = 0;
  RhsFunction rhs;
  std::string name;

  /// Evaluates rhs and checks the output shape and finiteness.
  StateVector operator()(const StateVector& x) const;
};

StateVector rk4_step(const OdeSystem& sys, const StateVector& x, double dt);

struct SimulateOptions {
  double overflow_guard = 1e8;
};

/// Fixed-step RK4 from t0 to t1; returns round((t1 - t0) / dt) + 1 samples.
Trajectory simulate(const OdeSystem& sys, const StateVector& x0, double t0, double t1, double dt,
                    const SimulateOptions& options = {});

/// Adds N(0, (sigma * std_d)^2) to every entry of component d, where std_d is
/// the standard deviation of that component over the trajectory.
Trajectory add_noise(const Trajectory& traj, double sigma, std::uint64_t seed);

}  // namespace msd
