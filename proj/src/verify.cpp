#include "exo/verify.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace exo {

namespace {

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec5 random_q(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  Vec5 q;
  for (int i = 0; i < kJoints; ++i) q[i] = u(rng);
  return q;
}

}  // namespace

JacobianCheck check_jacobian(const RobotModel& model, int n, std::uint64_t seed, double h) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  JacobianCheck r;
  auto one = [&](const Vec5& q) {
    const Mat35 J = jacobian(q, model.geometry);
    for (int j = 0; j < kJoints; ++j) {
      Vec5 qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      const Vec3 fd =
          (end_effector_position(qp, model.geometry) - end_effector_position(qm, model.geometry)) / (2.0 * h);
      r.max_abs_error = std::max(r.max_abs_error, (J.col(j) - fd).cwiseAbs().maxCoeff());
    }
    ++r.configurations;
  };
  one(builtin_scenario(1).q0);
  for (int k = 0; k < n; ++k) one(random_q(rng));
  r.seconds = since(t0);
  return r;
}

DynamicsCheck check_dynamics(const RobotModel& model, int n, std::uint64_t seed, double gravity_h) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> vel(-2.0, 2.0);
  DynamicsCheck r;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  const auto& in = model.inertial;
  const auto& g = model.geometry;
  for (int k = 0; k < n; ++k) {
    const Vec5 q = random_q(rng);
    Vec5 qd;
    for (int i = 0; i < kJoints; ++i) qd[i] = vel(rng);
    const Mat5 M = inertia_matrix(q, in, g);
    r.symmetric = r.symmetric && (M.array() == M.transpose().array()).all();
    r.min_eigenvalue = std::min(r.min_eigenvalue, Eigen::SelfAdjointEigenSolver<Mat5>(M).eigenvalues().minCoeff());

    const auto dM = inertia_matrix_partials(q, in, g);
    Mat5 Mdot = Mat5::Zero();
    for (int j = 0; j < kJoints; ++j) Mdot += dM[static_cast<std::size_t>(j)] * qd[j];
    const Mat5 C = coriolis_matrix(q, qd, in, g);
    r.max_skew_residual = std::max(r.max_skew_residual, std::abs(qd.dot((Mdot - 2.0 * C) * qd)));

    const Vec5 G = gravity_vector(q, in, g);
    for (int j = 0; j < kJoints; ++j) {
      Vec5 qp = q, qm = q;
      qp[j] += gravity_h;
      qm[j] -= gravity_h;
      const double fd = (potential_energy(qp, in, g) - potential_energy(qm, in, g)) / (2.0 * gravity_h);
      r.max_gravity_error = std::max(r.max_gravity_error, std::abs(G[j] - fd));
    }
    ++r.configurations;
  }
  r.seconds = since(t0);
  return r;
}

EnergyCheck check_energy(const RobotModel& model, const Vec5& q0, const Vec5& qd0, double duration, double dt) {
  RobotModel m = model;
  m.inertial.gravity_mps2 = 0.0;
  JointState s;
  s.q = q0;
  s.qd = qd0;
  EnergyCheck r;
  r.initial_energy = kinetic_energy(s, m.inertial, m.geometry);
  const auto accel = [&](double, const Vec5& q, const Vec5& qd) {
    JointState x;
    x.q = q;
    x.qd = qd;
    return forward_dynamics(x, Vec5::Zero(), Vec5::Zero(), m);
  };
  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long k = 0; k < steps; ++k) {
    s = rk4_step(s, static_cast<double>(k) * dt, dt, accel).next;
    const double e = kinetic_energy(s, m.inertial, m.geometry);
    r.max_relative_drift = std::max(r.max_relative_drift, std::abs(e - r.initial_energy) / r.initial_energy);
    r.final_energy = e;
  }
  return r;
}

OrderCheck check_rk4_order(double T, double dt) {
  using V2 = Eigen::Vector2d;
  const auto f = [](double, const V2& x) { return V2(x[1], -x[0]); };
  auto error = [&](double h) {
    V2 x(1.0, 0.0);
    const auto n = static_cast<long>(std::llround(T / h));
    for (long k = 0; k < n; ++k) x = rk4(x, static_cast<double>(k) * h, h, f);
    return std::abs(x[0] - std::cos(T)) + std::abs(x[1] + std::sin(T));
  };
  OrderCheck r;
  r.error_coarse = error(dt);
  r.error_fine = error(0.5 * dt);
  r.ratio = r.error_coarse / r.error_fine;
  return r;
}

std::string dyncheck_json(const JacobianCheck& j, const DynamicsCheck& d, const EnergyCheck& e, const OrderCheck& o) {
  nlohmann::ordered_json out;
  out["jacobian"] = {{"configurations", j.configurations},
                     {"max_abs_error", j.max_abs_error},
                     {"seconds", j.seconds}};
  out["dynamics"] = {{"configurations", d.configurations},
                     {"symmetric", d.symmetric},
                     {"min_eigenvalue", d.min_eigenvalue},
                     {"max_skew_residual", d.max_skew_residual},
                     {"max_gravity_error", d.max_gravity_error},
                     {"seconds", d.seconds}};
  out["energy"] = {{"initial", e.initial_energy},
                   {"final", e.final_energy},
                   {"max_relative_drift", e.max_relative_drift}};
  out["rk4_order"] = {{"error_coarse", o.error_coarse}, {"error_fine", o.error_fine}, {"ratio", o.ratio}};
  return out.dump(2) + "\n";
}

}  // namespace exo
