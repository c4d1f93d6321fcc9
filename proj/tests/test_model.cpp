#include "oracles.hpp"

#include "exo/model.hpp"
#include "exo/sim.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace exo;

namespace {

Vec5 random_q(std::mt19937_64& rng, double span = std::numbers::pi) {
  std::uniform_real_distribution<double> u(-span, span);
  Vec5 q;
  for (int i = 0; i < kJoints; ++i) q[i] = u(rng);
  return q;
}

const RobotModel kModel{};

}  // namespace

TEST_CASE("chain bottom row and rotation block") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Mat4 T = dh_chain(random_q(rng), kModel.geometry);
    CHECK(T(3, 0) == 0.0);
    CHECK(T(3, 1) == 0.0);
    CHECK(T(3, 2) == 0.0);
    CHECK(T(3, 3) == 1.0);
    const Mat3 R = T.topLeftCorner<3, 3>();
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("base element carries the 60.35 mm offset") {
  Vec5 q = Vec5::Zero();
  q[0] = std::numbers::pi / 2;
  const auto T = element_transforms(q, kModel.geometry);
  // 60.35 sin(pi/2) mm, stored in metres
  CHECK(T[0](0, 3) == doctest::Approx(60.35e-3).epsilon(1e-15));
  CHECK(kModel.geometry.base_offset_m() == 60.35 * 1e-3);
}

TEST_CASE("chain matches the hand-typed element product") {
  std::mt19937_64 rng(2);
  std::vector<Vec5> qs{Vec5::Zero()};
  for (int k = 0; k < 20; ++k) qs.push_back(random_q(rng));
  for (const auto& q : qs) {
    const auto F = oracle::frames<double>(q, kModel.geometry);
    CHECK((dh_chain(q, kModel.geometry) - F[5]).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((end_effector_position(q, kModel.geometry) - F[5].topRightCorner<3, 1>()).norm() < 1e-14);
  }
}

TEST_CASE("tip position is continuous and within reach") {
  std::mt19937_64 rng(3);
  const double reach = geometric_reach(kModel.geometry);
  double max_norm = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const Vec5 q = random_q(rng);
    max_norm = std::max(max_norm, end_effector_position(q, kModel.geometry).norm());
    Vec5 dq = Vec5::Constant(1e-9);
    CHECK((end_effector_position(q + dq, kModel.geometry) - end_effector_position(q, kModel.geometry)).norm() < 1e-7);
  }
  CHECK(max_norm <= reach);
}

TEST_CASE("jacobian against central differences") {
  std::mt19937_64 rng(4);
  std::vector<Vec5> qs{builtin_scenario(1).q0};
  for (int k = 0; k < 100; ++k) qs.push_back(random_q(rng));
  const double h = 1e-6;
  for (const auto& q : qs) {
    const Mat35 J = jacobian(q, kModel.geometry);
    CHECK((J * Vec5::Zero()).isZero(0.0));
    for (int j = 0; j < kJoints; ++j) {
      Vec5 a = q, b = q;
      a[j] += h;
      b[j] -= h;
      const auto Fa = oracle::frames<double>(a, kModel.geometry);
      const auto Fb = oracle::frames<double>(b, kModel.geometry);
      const Vec3 fd = (Fa[5].topRightCorner<3, 1>() - Fb[5].topRightCorner<3, 1>()) / (2 * h);
      CHECK((J.col(j) - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("tip force mapping: zero, linearity, virtual work") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const Mat35 J = jacobian(random_q(rng), kModel.geometry);
  CHECK(tip_force_to_joint_torques(J, TipForce{}).isZero(0.0));
  for (int k = 0; k < 100; ++k) {
    const Vec5 q = random_q(rng);
    const Mat35 Jq = jacobian(q, kModel.geometry);
    TipForce f1, f2;
    f1.f = Vec3(n(rng), n(rng), n(rng));
    f2.f = Vec3(n(rng), n(rng), n(rng));
    const double a = n(rng), b = n(rng);
    TipForce mix;
    mix.f = a * f1.f + b * f2.f;
    const Vec5 lhs = tip_force_to_joint_torques(Jq, mix);
    const Vec5 rhs = a * tip_force_to_joint_torques(Jq, f1) + b * tip_force_to_joint_torques(Jq, f2);
    CHECK((lhs - rhs).norm() < 1e-12);

    Vec5 qd;
    for (int i = 0; i < kJoints; ++i) qd[i] = n(rng);
    // tip velocity from a complex-step derivative of the oracle chain
    using C = std::complex<double>;
    oracle::V5<C> qc = q.cast<C>();
    for (int i = 0; i < kJoints; ++i) qc[i] += C(0.0, 1e-30 * qd[i]);
    const auto Fc = oracle::frames<C>(qc, kModel.geometry);
    Vec3 xd;
    for (int r = 0; r < 3; ++r) xd[r] = Fc[5](r, 3).imag() / 1e-30;
    CHECK(std::abs(tip_force_to_joint_torques(Jq, f1).dot(qd) - f1.f.dot(xd)) < 1e-10);
  }
}

TEST_CASE("inertia matrix: symmetric, positive definite, kinetic energy oracle") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  double min_eig = 1e300;
  for (int k = 0; k < 1000; ++k) {
    const Vec5 q = random_q(rng);
    const Mat5 M = inertia_matrix(q, kModel.inertial, kModel.geometry);
    REQUIRE((M.array() == M.transpose().array()).all());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat5>(M).eigenvalues().minCoeff());
    if (k < 100) {
      Vec5 qd;
      for (int i = 0; i < kJoints; ++i) qd[i] = n(rng);
      const double T = 0.5 * qd.dot(M * qd);
      CHECK(std::abs(T - oracle::kinetic_energy(q, qd, kModel.inertial, kModel.geometry)) < 1e-9);
    }
  }
  CHECK(min_eig > 0.0);
}

TEST_CASE("coriolis: zero velocity, skew property, Euler-Lagrange residual") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto& in = kModel.inertial;
  const auto& g = kModel.geometry;
  for (int k = 0; k < 20; ++k) {
    const Vec5 q = random_q(rng);
    Vec5 qd, qdd;
    for (int i = 0; i < kJoints; ++i) {
      qd[i] = n(rng);
      qdd[i] = n(rng);
    }
    CHECK((coriolis_matrix(q, Vec5::Zero(), in, g) * Vec5::Zero()).isZero(0.0));

    // Mdot by central differences along the trajectory q + t qd
    const double h = 1e-6;
    const Mat5 Mdot = (inertia_matrix(q + h * qd, in, g) - inertia_matrix(q - h * qd, in, g)) / (2 * h);
    const Mat5 C = coriolis_matrix(q, qd, in, g);
    CHECK(std::abs(qd.dot((Mdot - 2.0 * C) * qd)) < 1e-9);

    const DynamicsTerms d = dynamics_terms(q, qd, kModel);
    CHECK((d.coriolis - C * qd).norm() < 1e-10);
    const Vec5 lhs = d.M * qdd + d.coriolis + d.G;
    const Vec5 rhs = oracle::lagrangian_torque(q, qd, qdd, in, g);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("gravity: zero constant, potential gradient, bound") {
  std::mt19937_64 rng(8);
  RobotModel flat = kModel;
  flat.inertial.gravity_mps2 = 0.0;
  CHECK(gravity_vector(random_q(rng), flat.inertial, flat.geometry).isZero(0.0));

  double bound = 0.0;
  for (int i = 0; i < kJoints; ++i) bound += kModel.inertial.masses_kg[i];
  bound *= kModel.inertial.gravity_mps2 * geometric_reach(kModel.geometry);
  for (int k = 0; k < 2000; ++k) {
    const Vec5 q = random_q(rng);
    const Vec5 G = gravity_vector(q, kModel.inertial, kModel.geometry);
    CHECK(G.cwiseAbs().maxCoeff() <= bound);
    if (k < 200) {
      for (int j = 0; j < kJoints; ++j) {
        Vec5 a = q, b = q;
        a[j] += 1e-5;
        b[j] -= 1e-5;
        const double fd = (oracle::potential_energy(a, kModel.inertial, kModel.geometry) -
                           oracle::potential_energy(b, kModel.inertial, kModel.geometry)) /
                          2e-5;
        CHECK(std::abs(G[j] - fd) < 1e-8);
      }
    }
  }
}

TEST_CASE("forward dynamics: static equilibrium and plug-back residual") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    JointState s;
    s.q = random_q(rng);
    Vec5 F, u;
    for (int i = 0; i < kJoints; ++i) {
      F[i] = n(rng);
      u[i] = n(rng);
    }
    const Vec5 G = gravity_vector(s.q, kModel.inertial, kModel.geometry);
    CHECK(forward_dynamics(s, G + F, F, kModel).cwiseAbs().maxCoeff() < 1e-10);

    for (int i = 0; i < kJoints; ++i) s.qd[i] = n(rng);
    const Vec5 qdd = forward_dynamics(s, u, F, kModel);
    const DynamicsTerms d = dynamics_terms(s.q, s.qd, kModel);
    CHECK((d.M * qdd + d.coriolis + d.G + F - u).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("invalid inputs are rejected") {
  Vec5 q = Vec5::Zero();
  q[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dh_chain(q, kModel.geometry), InvalidArgument);
  CHECK_THROWS_AS(jacobian(q, kModel.geometry), InvalidArgument);
  RobotGeometry g;
  g.scap_m = 0.0;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  InertialParams in = kModel.inertial;
  in.masses_kg[1] = -1.0;
  CHECK_THROWS_AS(in.validate(), InvalidArgument);
  TipForce f;
  f.f = Vec3(20.0, 0.0, 0.0);
  CHECK_THROWS_AS(validate_tip_force(f, kModel.force_bound), InvalidArgument);
  JointState s;
  s.qd[0] = 2 * kModel.state_cap;
  CHECK_THROWS_AS(validate_state(s, kModel.state_cap), InvalidArgument);
}
