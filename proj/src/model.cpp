#include "exo/model.hpp"

#include <cmath>
#include <complex>
#include <string>

namespace exo {

namespace {

// Each element transform is affine in (cos q, sin q):
//   T(q) = A cos q + B sin q + K,
// so dT/dq = -A sin q + B cos q and d2T/dq2 = -A cos q - B sin q.
struct ElementCoeffs {
  Mat4 A = Mat4::Zero();
  Mat4 B = Mat4::Zero();
  Mat4 K = Mat4::Zero();
};

std::array<ElementCoeffs, kJoints> element_coeffs(const RobotGeometry& g) {
  std::array<ElementCoeffs, kJoints> e{};
  for (auto& c : e) c.K(3, 3) = 1.0;

  const double a = g.base_offset_m();
  // T01 = [c 0 s a*s; s 0 -c a*c; 0 1 0 0]
  e[0].A(0, 0) = 1.0;
  e[0].A(1, 2) = -1.0;
  e[0].A(1, 3) = a;
  e[0].B(1, 0) = 1.0;
  e[0].B(0, 2) = 1.0;
  e[0].B(0, 3) = a;
  e[0].K(2, 1) = 1.0;

  // T12 = [c -s 0 scap*c; s c 0 scap*s; 0 0 1 0]
  e[1].A(0, 0) = 1.0;
  e[1].A(1, 1) = 1.0;
  e[1].A(0, 3) = g.scap_m;
  e[1].B(0, 1) = -1.0;
  e[1].B(1, 0) = 1.0;
  e[1].B(1, 3) = g.scap_m;
  e[1].K(2, 2) = 1.0;

  // T23 = [s 0 c link*c; -c 0 s link*s; 0 -1 0 0]
  e[2].A(0, 2) = 1.0;
  e[2].A(1, 0) = -1.0;
  e[2].A(0, 3) = g.link_m;
  e[2].B(0, 0) = 1.0;
  e[2].B(1, 2) = 1.0;
  e[2].B(1, 3) = g.link_m;
  e[2].K(2, 1) = -1.0;

  // T34 = [0 -s -c -c; 0 c -s -s; 1 0 0 0]
  e[3].A(0, 2) = -1.0;
  e[3].A(1, 1) = 1.0;
  e[3].A(0, 3) = -1.0;
  e[3].B(0, 1) = -1.0;
  e[3].B(1, 2) = -1.0;
  e[3].B(1, 3) = -1.0;
  e[3].K(2, 0) = 1.0;

  // T45 = [c -s 0 0; s c 0 0; 0 0 1 -fullarm]
  e[4].A(0, 0) = 1.0;
  e[4].A(1, 1) = 1.0;
  e[4].B(0, 1) = -1.0;
  e[4].B(1, 0) = 1.0;
  e[4].K(2, 2) = 1.0;
  e[4].K(2, 3) = -g.fullarm_m;
  return e;
}

template <class S>
using M4 = Eigen::Matrix<S, 4, 4>;
template <class S>
using M3 = Eigen::Matrix<S, 3, 3>;
template <class S>
using V3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using V5 = Eigen::Matrix<S, 5, 1>;
template <class S>
using M5 = Eigen::Matrix<S, 5, 5>;

template <class S>
struct Chain {
  std::array<M4<S>, kJoints + 1> frame;                     // frame[i] = T_0^i
  std::array<std::array<M4<S>, kJoints>, kJoints + 1> dframe;  // d frame[i] / d q_j, j < i
};

template <class S>
Chain<S> build_chain(const V5<S>& q, const std::array<ElementCoeffs, kJoints>& ec) {
  using std::cos;
  using std::sin;
  std::array<M4<S>, kJoints> T, dT;
  for (int j = 0; j < kJoints; ++j) {
    const S c = cos(q[j]);
    const S s = sin(q[j]);
    T[j] = ec[j].A.template cast<S>() * c + ec[j].B.template cast<S>() * s + ec[j].K.template cast<S>();
    dT[j] = ec[j].B.template cast<S>() * c - ec[j].A.template cast<S>() * s;
  }
  Chain<S> ch;
  ch.frame[0] = M4<S>::Identity();
  for (int i = 1; i <= kJoints; ++i) ch.frame[i] = ch.frame[i - 1] * T[i - 1];
  for (int j = 0; j < kJoints; ++j) {
    ch.dframe[j + 1][j] = ch.frame[j] * dT[j];
    for (int i = j + 2; i <= kJoints; ++i) ch.dframe[i][j] = ch.dframe[i - 1][j] * T[i - 1];
  }
  return ch;
}

template <class S>
V3<S> vee_skew(const M3<S>& W) {
  return V3<S>(S(0.5) * (W(2, 1) - W(1, 2)), S(0.5) * (W(0, 2) - W(2, 0)),
               S(0.5) * (W(1, 0) - W(0, 1)));
}

// Centre-of-mass offsets in body coordinates, from the q = 0 geometry.
std::array<Vec3, kJoints> com_offsets(const InertialParams& in, const RobotGeometry& g,
                                      const std::array<ElementCoeffs, kJoints>& ec) {
  const Chain<double> ch = build_chain<double>(Vec5::Zero(), ec);
  std::array<Vec3, kJoints> r{};
  for (int i = 1; i <= kJoints; ++i) {
    const Mat3 R = ch.frame[i].topLeftCorner<3, 3>();
    const Vec3 back = ch.frame[i - 1].topRightCorner<3, 1>() - ch.frame[i].topRightCorner<3, 1>();
    r[i - 1] = R.transpose() * back.normalized() * in.com_m[i - 1];
  }
  (void)g;
  return r;
}

template <class S>
struct LinkJacobians {
  std::array<Eigen::Matrix<S, 3, 5>, kJoints> Jc;  // centre-of-mass linear velocity
  std::array<Eigen::Matrix<S, 3, 5>, kJoints> Jw;  // angular velocity
  std::array<V3<S>, kJoints> com;
};

template <class S>
LinkJacobians<S> link_jacobians(const Chain<S>& ch, const std::array<Vec3, kJoints>& rbar) {
  LinkJacobians<S> lj;
  for (int i = 1; i <= kJoints; ++i) {
    auto& Jc = lj.Jc[i - 1];
    auto& Jw = lj.Jw[i - 1];
    Jc.setZero();
    Jw.setZero();
    const M3<S> R = ch.frame[i].template topLeftCorner<3, 3>();
    const V3<S> r = rbar[i - 1].template cast<S>();
    lj.com[i - 1] = ch.frame[i].template topRightCorner<3, 1>() + R * r;
    for (int j = 0; j < i; ++j) {
      const M4<S>& dF = ch.dframe[i][j];
      const M3<S> dR = dF.template topLeftCorner<3, 3>();
      Jc.col(j) = dF.template topRightCorner<3, 1>() + dR * r;
      Jw.col(j) = vee_skew<S>(dR * R.transpose());
    }
  }
  return lj;
}

// Column dot product without complex conjugation.
template <class A, class B>
auto plain_dot(const A& a, const B& b) {
  return a.cwiseProduct(b).sum();
}

template <class S>
M5<S> mass_matrix_t(const V5<S>& q, const InertialParams& in, const std::array<ElementCoeffs, kJoints>& ec,
                    const std::array<Vec3, kJoints>& rbar) {
  const Chain<S> ch = build_chain<S>(q, ec);
  const LinkJacobians<S> lj = link_jacobians<S>(ch, rbar);
  M5<S> M = M5<S>::Zero();
  for (int i = 0; i < kJoints; ++i) {
    const S m(in.masses_kg[i]);
    const S I(in.inertia_kgm2[i]);
    // Link i only moves with joints 0..i.
    for (int j = 0; j <= i; ++j) {
      for (int k = j; k <= i; ++k) {
        M(j, k) += m * plain_dot(lj.Jc[i].col(j), lj.Jc[i].col(k)) +
                   I * plain_dot(lj.Jw[i].col(j), lj.Jw[i].col(k));
      }
    }
  }
  for (int j = 0; j < kJoints; ++j)
    for (int k = j + 1; k < kJoints; ++k) M(k, j) = M(j, k);
  return M;
}

void require_finite(const Vec5& v, const char* what) {
  if (!v.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite entries");
}

}  // namespace

std::array<double, kJoints> RobotGeometry::link_lengths() const {
  return {base_offset_m(), scap_m, link_m, 1.0, fullarm_m};
}

void RobotGeometry::validate() const {
  const double v[] = {base_offset_mm, scap_m, link_m, fullarm_m};
  for (double x : v)
    if (!(std::isfinite(x) && x > 0.0)) throw InvalidArgument("geometry lengths must be finite and > 0");
}

InertialParams InertialParams::defaults_for(const RobotGeometry& geom) {
  InertialParams p;
  const auto L = geom.link_lengths();
  for (int i = 0; i < kJoints; ++i) {
    p.com_m[i] = 0.5 * L[i];
    p.inertia_kgm2[i] = p.masses_kg[i] * L[i] * L[i] / 12.0;
  }
  return p;
}

void InertialParams::validate() const {
  for (int i = 0; i < kJoints; ++i) {
    if (!(std::isfinite(masses_kg[i]) && masses_kg[i] > 0.0))
      throw InvalidArgument("link masses must be finite and > 0");
    if (!(std::isfinite(inertia_kgm2[i]) && inertia_kgm2[i] > 0.0))
      throw InvalidArgument("link inertias must be finite and > 0");
    if (!std::isfinite(com_m[i])) throw InvalidArgument("centre-of-mass offsets must be finite");
  }
  if (!(std::isfinite(gravity_mps2) && gravity_mps2 >= 0.0))
    throw InvalidArgument("gravity must be finite and >= 0");
}

void RobotModel::validate() const {
  geometry.validate();
  inertial.validate();
  if (!(state_cap > 0.0)) throw InvalidArgument("state_cap must be > 0");
  if (!(force_bound > 0.0)) throw InvalidArgument("force_bound must be > 0");
}

void validate_state(const JointState& s, double cap) {
  require_finite(s.q, "q");
  require_finite(s.qd, "qd");
  require_finite(s.qdd, "qdd");
  if (s.q.cwiseAbs().maxCoeff() > cap || s.qd.cwiseAbs().maxCoeff() > cap)
    throw InvalidArgument("joint state exceeds the configured magnitude cap");
}

void validate_tip_force(const TipForce& f, double bound) {
  if (!f.f.allFinite()) throw InvalidArgument("tip force contains non-finite entries");
  if (f.f.norm() > bound) throw InvalidArgument("tip force norm exceeds the configured bound K");
}

std::array<Mat4, kJoints> element_transforms(const Vec5& q, const RobotGeometry& geom) {
  require_finite(q, "q");
  const auto ec = element_coeffs(geom);
  std::array<Mat4, kJoints> T;
  for (int j = 0; j < kJoints; ++j) T[j] = ec[j].A * std::cos(q[j]) + ec[j].B * std::sin(q[j]) + ec[j].K;
  return T;
}

Mat4 dh_chain(const Vec5& q, const RobotGeometry& geom) {
  const auto T = element_transforms(q, geom);
  Mat4 out = T[0];
  for (int j = 1; j < kJoints; ++j) out = out * T[j];
  return out;
}

Vec3 end_effector_position(const Vec5& q, const RobotGeometry& geom) {
  return dh_chain(q, geom).topRightCorner<3, 1>();
}

Mat35 jacobian(const Vec5& q, const RobotGeometry& geom) {
  require_finite(q, "q");
  const Chain<double> ch = build_chain<double>(q, element_coeffs(geom));
  Mat35 J;
  for (int j = 0; j < kJoints; ++j) J.col(j) = ch.dframe[kJoints][j].topRightCorner<3, 1>();
  return J;
}

Vec5 tip_force_to_joint_torques(const Mat35& J, const TipForce& f) {
  if (!J.allFinite() || !f.f.allFinite()) throw InvalidArgument("non-finite Jacobian or tip force");
  return J.transpose() * f.f;
}

double geometric_reach(const RobotGeometry& geom) {
  const auto L = geom.link_lengths();
  double r = 0.0;
  for (double l : L) r += l;
  return r;
}

Mat5 inertia_matrix(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom) {
  require_finite(q, "q");
  const auto ec = element_coeffs(geom);
  return mass_matrix_t<double>(q, inertial, ec, com_offsets(inertial, geom, ec));
}

std::array<Mat5, kJoints> inertia_matrix_partials(const Vec5& q, const InertialParams& inertial,
                                                  const RobotGeometry& geom) {
  require_finite(q, "q");
  using C = std::complex<double>;
  constexpr double h = 1e-20;
  const auto ec = element_coeffs(geom);
  const auto rbar = com_offsets(inertial, geom, ec);
  std::array<Mat5, kJoints> dM;
  for (int k = 0; k < kJoints; ++k) {
    V5<C> qc = q.cast<C>();
    qc[k] += C(0.0, h);
    dM[k] = mass_matrix_t<C>(qc, inertial, ec, rbar).imag() / h;
  }
  return dM;
}

Mat5 coriolis_matrix(const Vec5& q, const Vec5& qd, const InertialParams& inertial,
                     const RobotGeometry& geom) {
  require_finite(qd, "qd");
  const auto dM = inertia_matrix_partials(q, inertial, geom);
  Mat5 C = Mat5::Zero();
  // C_kj = sum_i 0.5 (dM_kj/dq_i + dM_ki/dq_j - dM_ij/dq_k) qd_i
  for (int k = 0; k < kJoints; ++k)
    for (int j = 0; j < kJoints; ++j)
      for (int i = 0; i < kJoints; ++i)
        C(k, j) += 0.5 * (dM[i](k, j) + dM[j](k, i) - dM[k](i, j)) * qd[i];
  return C;
}

Vec5 gravity_vector(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom) {
  require_finite(q, "q");
  const auto ec = element_coeffs(geom);
  const Chain<double> ch = build_chain<double>(q, ec);
  const auto lj = link_jacobians<double>(ch, com_offsets(inertial, geom, ec));
  Vec5 G = Vec5::Zero();
  for (int i = 0; i < kJoints; ++i) G += inertial.masses_kg[i] * inertial.gravity_mps2 * lj.Jc[i].row(2).transpose();
  return G;
}

double potential_energy(const Vec5& q, const InertialParams& inertial, const RobotGeometry& geom) {
  require_finite(q, "q");
  const auto ec = element_coeffs(geom);
  const Chain<double> ch = build_chain<double>(q, ec);
  const auto lj = link_jacobians<double>(ch, com_offsets(inertial, geom, ec));
  double U = 0.0;
  for (int i = 0; i < kJoints; ++i) U += inertial.masses_kg[i] * inertial.gravity_mps2 * lj.com[i].z();
  return U;
}

double kinetic_energy(const JointState& s, const InertialParams& inertial, const RobotGeometry& geom) {
  return 0.5 * s.qd.dot(inertia_matrix(s.q, inertial, geom) * s.qd);
}

DynamicsTerms dynamics_terms(const Vec5& q, const Vec5& qd, const RobotModel& model) {
  require_finite(q, "q");
  require_finite(qd, "qd");
  const auto& in = model.inertial;
  const auto ec = element_coeffs(model.geometry);
  const auto rbar = com_offsets(in, model.geometry, ec);
  const Chain<double> ch = build_chain<double>(q, ec);
  const auto lj = link_jacobians<double>(ch, rbar);

  // First and second time derivatives of every frame along qd with qdd = 0.
  std::array<Mat4, kJoints + 1> Fd, Fdd;
  Fd[0].setZero();
  Fdd[0].setZero();
  for (int i = 1; i <= kJoints; ++i) {
    const int j = i - 1;
    const double c = std::cos(q[j]);
    const double s = std::sin(q[j]);
    const Mat4 T = ec[j].A * c + ec[j].B * s + ec[j].K;
    const Mat4 Td = (ec[j].B * c - ec[j].A * s) * qd[j];
    const Mat4 Tdd = (-(ec[j].A * c) - ec[j].B * s) * (qd[j] * qd[j]);
    Fd[i] = Fd[i - 1] * T + ch.frame[i - 1] * Td;
    Fdd[i] = Fdd[i - 1] * T + 2.0 * (Fd[i - 1] * Td) + ch.frame[i - 1] * Tdd;
  }

  DynamicsTerms out;
  out.M.setZero();
  out.coriolis.setZero();
  out.G.setZero();
  for (int i = 0; i < kJoints; ++i) {
    const double m = in.masses_kg[i];
    const double I = in.inertia_kgm2[i];
    for (int j = 0; j <= i; ++j)
      for (int k = j; k <= i; ++k)
        out.M(j, k) += m * lj.Jc[i].col(j).dot(lj.Jc[i].col(k)) + I * lj.Jw[i].col(j).dot(lj.Jw[i].col(k));

    const Mat3 R = ch.frame[i + 1].topLeftCorner<3, 3>();
    const Mat3 Rdd = Fdd[i + 1].topLeftCorner<3, 3>();
    const Vec3 acc = Fdd[i + 1].topRightCorner<3, 1>() + Rdd * rbar[i];
    const Vec3 alpha = vee_skew<double>(Rdd * R.transpose());
    // Isotropic inertia: the gyroscopic term w x (I w) vanishes.
    out.coriolis += m * lj.Jc[i].transpose() * acc + I * lj.Jw[i].transpose() * alpha;
    out.G += m * in.gravity_mps2 * lj.Jc[i].row(2).transpose();
  }
  for (int j = 0; j < kJoints; ++j)
    for (int k = j + 1; k < kJoints; ++k) out.M(k, j) = out.M(j, k);
  return out;
}

Vec5 forward_dynamics(const JointState& state, const Vec5& u, const Vec5& F, const RobotModel& model) {
  if (!u.allFinite() || !F.allFinite()) throw InvalidArgument("non-finite torque input");
  const DynamicsTerms d = dynamics_terms(state.q, state.qd, model);
  const Eigen::LLT<Mat5> llt(d.M);
  if (llt.info() != Eigen::Success) throw ModelError("inertia matrix is not positive definite");
  const Vec5 qdd = llt.solve(u - d.coriolis - d.G - F);
  if (!qdd.allFinite()) throw ModelError("forward dynamics produced non-finite acceleration");
  return qdd;
}

}  // namespace exo
