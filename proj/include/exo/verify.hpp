#pragma once

// Numerical checks of the model and integrator, shared by the dyncheck
// command and the acceptance runner.

#include "exo/sim.hpp"

#include <cstdint>
#include <string>

namespace exo {

struct JacobianCheck {
  int configurations = 0;
  double max_abs_error = 0.0;  // max entry |J - J_fd|
  double seconds = 0.0;
};

// Central differences of the tip position with step h at n random q plus
// the scenario-1 initial q.
JacobianCheck check_jacobian(const RobotModel& model, int n, std::uint64_t seed, double h = 1e-6);

struct DynamicsCheck {
  int configurations = 0;
  bool symmetric = true;               // M == M' bit for bit everywhere
  double min_eigenvalue = 0.0;         // smallest eigenvalue of M seen
  double max_skew_residual = 0.0;      // max |qd' (Mdot - 2C) qd|
  double max_gravity_error = 0.0;      // max |G - dU/dq|, central differences
  double seconds = 0.0;
};

DynamicsCheck check_dynamics(const RobotModel& model, int n, std::uint64_t seed, double gravity_h = 1e-5);

struct EnergyCheck {
  double initial_energy = 0.0;
  double final_energy = 0.0;
  double max_relative_drift = 0.0;
};

// Unactuated coast without gravity or contact force from the given state.
EnergyCheck check_energy(const RobotModel& model, const Vec5& q0, const Vec5& qd0, double duration, double dt);

struct OrderCheck {
  double error_coarse = 0.0;
  double error_fine = 0.0;
  double ratio = 0.0;
};

// x'' = -x from (1, 0) to time T with steps dt and dt / 2 against cos t.
OrderCheck check_rk4_order(double T = 10.0, double dt = 0.1);

std::string dyncheck_json(const JacobianCheck& j, const DynamicsCheck& d, const EnergyCheck& e, const OrderCheck& o);

}  // namespace exo
