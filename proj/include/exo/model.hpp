#pragma once

// Kinematics and rigid-body dynamics of the 5-DOF upper-limb exoskeleton.
//
// The chain is the product of the five element transforms
//
//   T = T01(q0) * T12(q1) * T23(q2) * T34(q3) * T45(q4)
//
// with the element matrices taken verbatim, including the base element whose
// translation column is (a sin q0, a cos q0, 0) with a = 60.35 mm. Link i
// (1..5) is a rigid body attached to frame i. Its centre of mass sits a
// distance com_m[i] from the frame origin along the direction pointing back
// to the previous frame origin (measured at q = 0), and its rotational
// inertia is isotropic about the centre of mass. Gravity acts along -z of
// the base frame.
//
// Everything here is a pure function of its arguments.

#include "exo/types.hpp"

#include <array>

namespace exo {

inline constexpr double kMillimetersToMeters = 1e-3;

struct RobotGeometry {
  double base_offset_mm = 60.35;
  double scap_m = 0.15;
  double link_m = 0.25;
  double fullarm_m = 0.30;

  double base_offset_m() const { return base_offset_mm * kMillimetersToMeters; }

  // Distance between consecutive frame origins at q = 0, one per link.
  // The fourth element's translation has no length parameter and is 1 m.
  std::array<double, kJoints> link_lengths() const;

  void validate() const;
};

struct InertialParams {
  std::array<double, kJoints> masses_kg{2.0, 1.5, 1.0, 1.0, 0.5};
  std::array<double, kJoints> com_m{};
  std::array<double, kJoints> inertia_kgm2{};
  double gravity_mps2 = 9.81;

  // Documented defaults: mid-link centre of mass and slender-rod inertia
  // m L^2 / 12 about the centre of mass.
  static InertialParams defaults_for(const RobotGeometry& geom);

  void validate() const;
};

struct RobotModel {
  RobotGeometry geometry{};
  InertialParams inertial = InertialParams::defaults_for(RobotGeometry{});
  // Assumption-1 style cap on |q|, |qd| entries; beyond it the state is
  // rejected as non-physical.
  double state_cap = 1e4;
  // Bound K on the Euclidean norm of the tip force.
  double force_bound = 10.0;

  void validate() const;
};

struct JointState {
  Vec5 q = Vec5::Zero();
  Vec5 qd = Vec5::Zero();
  Vec5 qdd = Vec5::Zero();
};

struct TipForce {
  Vec3 f = Vec3::Zero();
};

void validate_state(const JointState& s, double cap);
void validate_tip_force(const TipForce& f, double bound);

// Element transforms T_{i,i+1}(q_i), in meters.
std::array<Mat4, kJoints> element_transforms(const Vec5& q, const RobotGeometry& geom);

Mat4 dh_chain(const Vec5& q, const RobotGeometry& geom);
Vec3 end_effector_position(const Vec5& q, const RobotGeometry& geom);
Mat35 jacobian(const Vec5& q, const RobotGeometry& geom);
Vec5 tip_force_to_joint_torques(const Mat35& J, const TipForce& f);

// Upper bound on the end-effector distance from the base origin: the sum of
// the translation lengths of all elements.
double geometric_reach(const RobotGeometry& geom);

Mat5 inertia_matrix(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom);
// Christoffel-symbol construction; Mdot - 2C is skew-symmetric.
Mat5 coriolis_matrix(const Vec5& q, const Vec5& qd, const InertialParams& inertial,
                     const RobotGeometry& geom);
Vec5 gravity_vector(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom);
double potential_energy(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom);
double kinetic_energy(const JointState& s, const InertialParams& inertial, const RobotGeometry& geom);

// dM/dq_k for k = 0..4 (complex-step, exact to rounding).
std::array<Mat5, kJoints> inertia_matrix_partials(const Vec5& q, const InertialParams& inertial,
                                                  const RobotGeometry& geom);

// M, C(q,qd)qd and G evaluated together. The velocity product is computed
// from second directional derivatives of the chain, which is much cheaper
// than assembling C; coriolis_matrix(q, qd) * qd equals it to rounding.
struct DynamicsTerms {
  Mat5 M;
  Vec5 coriolis;  // C(q, qd) qd
  Vec5 G;
};
DynamicsTerms dynamics_terms(const Vec5& q, const Vec5& qd, const RobotModel& model);

// qdd = M^-1 (u - C qd - G - F).
Vec5 forward_dynamics(const JointState& state, const Vec5& u, const Vec5& F, const RobotModel& model);

}  // namespace exo
