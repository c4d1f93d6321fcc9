#include "exo/smc.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace exo {

void SurfaceConfig::validate() const {
  if (!(alpha1 > 0.0)) throw InvalidArgument("alpha1 must be > 0");
  if (!(alpha2 >= 0.0)) throw InvalidArgument("alpha2 must be >= 0");
  if (!(gamma > 0.0 && gamma < 2.0)) throw InvalidArgument("gamma must lie in (0, 2)");
}

void ReachingGains::validate() const {
  if (!(k1 > 0.0) || !std::isfinite(k1)) throw InvalidArgument("k1 must be finite and > 0");
  if (!(k2 > 0.0) || !std::isfinite(k2)) throw InvalidArgument("k2 must be finite and > 0");
  if (!(k3 >= 1.0) || !std::isfinite(k3)) throw InvalidArgument("k3 must be finite and >= 1");
}

Vec5 tracking_error(const Vec5& F_desired, const Vec5& F) { return F_desired - F; }

Vec5 terminal_integrand(const Vec5& E, double gamma) {
  Vec5 out;
  for (int i = 0; i < kJoints; ++i) out[i] = E[i] == 0.0 ? 0.0 : std::pow(std::abs(E[i]), gamma) * sign0(E[i]);
  return out;
}

void advance_integrals(ControllerMemory& mem, const Vec5& E, double t, double gamma) {
  const Vec5 Eg = terminal_integrand(E, gamma);
  if (mem.started) {
    const double dt = t - mem.t;
    mem.int_E += 0.5 * dt * (mem.prev_E + E);
    mem.int_E_gamma += 0.5 * dt * (mem.prev_E_gamma + Eg);
  }
  mem.prev_E = E;
  mem.prev_E_gamma = Eg;
  mem.t = t;
  mem.started = true;
}

Vec5 sliding_surface(const Vec5& E, const ControllerMemory& mem, const SurfaceConfig& cfg) {
  Vec5 s = E + cfg.alpha1 * mem.int_E;
  if (cfg.alpha2 != 0.0) s += cfg.alpha2 * mem.int_E_gamma;
  return s;
}

Vec5 switching_term(const Vec5& s, const ReachingGains& g, bool literal_eq21) {
  Vec5 u;
  for (int i = 0; i < kJoints; ++i) {
    const double a = std::abs(s[i]);
    const double sg = sign0(s[i]);
    const double expo = std::pow(g.k3, a) - 1.0;
    u[i] = g.k1 * sg + g.k2 * std::sqrt(a) * sg + (literal_eq21 ? expo : expo * sg);
  }
  return u;
}

Vec5 equivalent_term(const Vec5& lumped, const ControllerMemory& mem, const SurfaceConfig& cfg) {
  Vec5 u = lumped + cfg.alpha1 * mem.int_E;
  if (cfg.alpha2 != 0.0) u += cfg.alpha2 * mem.int_E_gamma;
  return u;
}

Vec5 lumped_dynamics(const JointState& state, const Vec5& qdd_hat, const RobotModel& model) {
  const DynamicsTerms d = dynamics_terms(state.q, state.qd, model);
  return d.M * qdd_hat + d.coriolis + d.G;
}

SurfaceStage surface_stage(const Vec5& F, double t, ControllerMemory& mem, const SurfaceConfig& cfg) {
  SurfaceStage st;
  st.t = t;
  st.E = tracking_error(Vec5::Zero(), F);
  advance_integrals(mem, st.E, t, cfg.gamma);
  st.s = sliding_surface(st.E, mem, cfg);
  return st;
}

namespace {

void check_output(const ControlOutput& out, double t) {
  if (!out.u.allFinite() || !out.s.allFinite())
    throw ControllerFault("non-finite control signal at t = " + std::to_string(t));
}

Vec5 acceleration_estimate(const ControllerMemory& mem, AccelerationEstimate a) {
  return a == AccelerationEstimate::kPreviousStep ? mem.prev_qdd : Vec5::Zero();
}

}  // namespace

ControlOutput finish_control(const SurfaceStage& stage, const JointState& state, const ControllerMemory& mem,
                             const ControlLaw& law, const ReachingGains& gains, const RobotModel& model) {
  ControlOutput out;
  out.E = stage.E;
  out.s = stage.s;
  out.gains_used = gains;
  out.u_eq = equivalent_term(lumped_dynamics(state, acceleration_estimate(mem, law.accel), model), mem, law.surface);
  out.u_sw = switching_term(stage.s, gains, law.literal_eq21);
  out.u = out.u_eq + out.u_sw;
  check_output(out, stage.t);
  return out;
}

ControlOutput control_step(const JointState& state, const Vec5& F, double t, ControllerMemory& mem,
                           const ControlLaw& law, const ReachingGains& gains, const RobotModel& model) {
  const SurfaceStage st = surface_stage(F, t, mem, law.surface);
  return finish_control(st, state, mem, law, gains, model);
}

ControlOutput finish_baseline(const SurfaceStage& stage, const JointState& state, const ControllerMemory& mem,
                              const ControlLaw& law, double k, const RobotModel& model) {
  if (!(k > 0.0)) throw InvalidArgument("SMC gain k must be > 0");
  SurfaceConfig classic = law.surface;
  classic.alpha2 = 0.0;
  ControlOutput out;
  out.E = stage.E;
  out.s = stage.s;
  out.gains_used = ReachingGains{k, 0.0, 1.0};
  out.u_eq = equivalent_term(lumped_dynamics(state, acceleration_estimate(mem, law.accel), model), mem, classic);
  for (int i = 0; i < kJoints; ++i) out.u_sw[i] = k * sign0(stage.s[i]);
  out.u = out.u_eq + out.u_sw;
  check_output(out, stage.t);
  return out;
}

ControlOutput smc_baseline_step(const JointState& state, const Vec5& F, double t, ControllerMemory& mem,
                                const ControlLaw& law, double k, const RobotModel& model) {
  SurfaceConfig classic = law.surface;
  classic.alpha2 = 0.0;
  const SurfaceStage st = surface_stage(F, t, mem, classic);
  return finish_baseline(st, state, mem, law, k, model);
}

void commit_step(ControllerMemory& mem, const Vec5& qdd, const Vec5& u) {
  mem.prev_qdd = qdd;
  mem.prev_u = u;
}

LyapunovReport lyapunov_monitor(std::span<const Vec5> s_log, double dt, double band, double tolerance) {
  const std::size_t n = s_log.size();
  if (n < 3) throw InvalidArgument("Lyapunov monitor needs at least 3 samples");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  LyapunovReport r;
  r.V1.resize(n);
  r.V1dot.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.V1[i] = 0.5 * s_log[i].squaredNorm();
  r.V1dot[0] = (-3.0 * r.V1[0] + 4.0 * r.V1[1] - r.V1[2]) / (2.0 * dt);
  for (std::size_t i = 1; i + 1 < n; ++i) r.V1dot[i] = (r.V1[i + 1] - r.V1[i - 1]) / (2.0 * dt);
  r.V1dot[n - 1] = (3.0 * r.V1[n - 1] - 4.0 * r.V1[n - 2] + r.V1[n - 3]) / (2.0 * dt);
  for (std::size_t i = 0; i < n; ++i) {
    if (s_log[i].cwiseAbs().maxCoeff() <= band) continue;
    ++r.considered;
    r.max_V1dot_outside_band = std::max(r.max_V1dot_outside_band, r.V1dot[i]);
    if (r.V1dot[i] > tolerance) ++r.violations;
  }
  return r;
}

}  // namespace exo
