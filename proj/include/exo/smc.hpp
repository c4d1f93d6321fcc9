#pragma once

// Sliding-mode force controllers for zero-force control.
//
//   E     = F_d - F                                   (F_d = 0)
//   s     = E + a1 int E dt + a2 int |E|^g sign(E) dt
//   u_eq  = Glump + a1 int E dt + a2 int |E|^g sign(E) dt
//   u_sw  = (K1 + (K3^|s| - 1)) sign(s) + K2 |s|^0.5 sign(s)
//   u     = u_eq + u_sw
//
// Glump = M(q) qdd_hat + C(q, qd) qd + G(q) is the lumped rigid-body torque.
// All vector operations are elementwise over the five joints.

#include "exo/model.hpp"

#include <limits>
#include <span>
#include <vector>

namespace exo {

struct SurfaceConfig {
  double alpha1 = 5.0;
  double alpha2 = 3.0;  // 0 selects the conventional integral surface
  double gamma = 0.6;

  void validate() const;
};

struct ReachingGains {
  double k1 = 2.0;
  double k2 = 5.0;
  double k3 = 1.5;

  void validate() const;
  bool operator==(const ReachingGains&) const = default;
};

// Where qdd_hat in the lumped torque comes from.
enum class AccelerationEstimate {
  kZero,          // rigid-body compensation without inertial feed-forward
  kPreviousStep,  // model acceleration of the previous integration step
};

struct ControllerMemory {
  Vec5 int_E = Vec5::Zero();
  Vec5 int_E_gamma = Vec5::Zero();
  Vec5 prev_E = Vec5::Zero();
  Vec5 prev_E_gamma = Vec5::Zero();
  Vec5 prev_qdd = Vec5::Zero();
  Vec5 prev_u = Vec5::Zero();
  double t = 0.0;
  bool started = false;
};

struct ControlOutput {
  Vec5 u = Vec5::Zero();
  Vec5 u_eq = Vec5::Zero();
  Vec5 u_sw = Vec5::Zero();
  Vec5 s = Vec5::Zero();
  Vec5 E = Vec5::Zero();
  ReachingGains gains_used{};
};

Vec5 tracking_error(const Vec5& F_desired, const Vec5& F);

// |E|^gamma sign(E), with the integrand defined as 0 at E = 0.
Vec5 terminal_integrand(const Vec5& E, double gamma);

// Trapezoidal advance of both running integrals to time t with the current
// error sample. The first call only records the sample.
void advance_integrals(ControllerMemory& mem, const Vec5& E, double t, double gamma);

Vec5 sliding_surface(const Vec5& E, const ControllerMemory& mem, const SurfaceConfig& cfg);

// literal_eq21 keeps the printed grouping where (K3^|s| - 1) is added
// without sign(s).
Vec5 switching_term(const Vec5& s, const ReachingGains& gains, bool literal_eq21 = false);

Vec5 equivalent_term(const Vec5& lumped, const ControllerMemory& mem, const SurfaceConfig& cfg);

Vec5 lumped_dynamics(const JointState& state, const Vec5& qdd_hat, const RobotModel& model);

// First half of a control step: error, integrals and surface. Split out so
// an adaptive gain source can observe s before the switching term is built.
struct SurfaceStage {
  Vec5 E;
  Vec5 s;
  double t;
};
SurfaceStage surface_stage(const Vec5& F, double t, ControllerMemory& mem, const SurfaceConfig& cfg);

struct ControlLaw {
  SurfaceConfig surface{};
  AccelerationEstimate accel = AccelerationEstimate::kZero;
  bool literal_eq21 = false;
};

// Second half: equivalent and switching terms under the given gains.
ControlOutput finish_control(const SurfaceStage& stage, const JointState& state, const ControllerMemory& mem,
                             const ControlLaw& law, const ReachingGains& gains, const RobotModel& model);

// Full ITSMC / AITSMC step. Fixed gains give the ITSMC law; gains produced by
// a policy give the adaptive law through exactly the same formula.
ControlOutput control_step(const JointState& state, const Vec5& F, double t, ControllerMemory& mem,
                           const ControlLaw& law, const ReachingGains& gains, const RobotModel& model);

// Classic comparator: conventional integral surface with u_sw = k sign(s).
// The stage must come from a surface with alpha2 = 0.
ControlOutput finish_baseline(const SurfaceStage& stage, const JointState& state, const ControllerMemory& mem,
                              const ControlLaw& law, double k, const RobotModel& model);
ControlOutput smc_baseline_step(const JointState& state, const Vec5& F, double t, ControllerMemory& mem,
                                const ControlLaw& law, double k, const RobotModel& model);

// Records the model acceleration and torque of the step just taken.
void commit_step(ControllerMemory& mem, const Vec5& qdd, const Vec5& u);

struct LyapunovReport {
  std::vector<double> V1;
  std::vector<double> V1dot;
  std::size_t considered = 0;  // samples with ||s||_inf > band
  std::size_t violations = 0;  // of those, samples with V1dot > tolerance
  double max_V1dot_outside_band = -std::numeric_limits<double>::infinity();
  double violation_fraction() const {
    return considered == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(considered);
  }
};

// V1 = 0.5 s's per sample; V1dot by central differences (one-sided second
// order at the ends).
LyapunovReport lyapunov_monitor(std::span<const Vec5> s_log, double dt, double band = 1e-3,
                                double tolerance = 1e-6);

}  // namespace exo
