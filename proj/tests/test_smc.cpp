#include "exo/policy.hpp"
#include "exo/sim.hpp"
#include "exo/smc.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace exo;

namespace {

ControllerMemory constant_history(double c, double T, double dt, double gamma) {
  ControllerMemory mem;
  const auto n = static_cast<long>(std::llround(T / dt));
  for (long k = 0; k <= n; ++k) advance_integrals(mem, Vec5::Constant(c), static_cast<double>(k) * dt, gamma);
  return mem;
}

RobotModel weightless() {
  RobotModel m;
  m.inertial.gravity_mps2 = 0.0;
  return m;
}

}  // namespace

TEST_CASE("tracking error") {
  const Vec5 F = (Vec5() << 1, -2, 3, 0.5, 0).finished();
  CHECK(tracking_error(F, F).isZero(0.0));
  CHECK(tracking_error(Vec5::Zero(), F) == -F);
  const Vec5 Fd = (Vec5() << 0.1, 0.2, 0.3, 0.4, 0.5).finished();
  CHECK(tracking_error(Fd, F) == -tracking_error(F, Fd));

  // zero desired force: E = -J' F_e
  const RobotModel m;
  const Vec5 q = builtin_scenario(1).q0;
  TipForce fe;
  fe.f = Vec3(0.3, -0.1, 0.2);
  const Vec5 Fj = tip_force_to_joint_torques(jacobian(q, m.geometry), fe);
  CHECK(tracking_error(Vec5::Zero(), Fj) == -(jacobian(q, m.geometry).transpose() * fe.f));
}

TEST_CASE("sliding surface: zero history and constant-error closed form") {
  const SurfaceConfig cfg;
  CHECK(sliding_surface(Vec5::Zero(), ControllerMemory{}, cfg).isZero(0.0));

  for (double c : {0.7, -0.3, 2.0}) {
    const double T = 2.0;
    const ControllerMemory mem = constant_history(c, T, 1e-3, cfg.gamma);
    const Vec5 s = sliding_surface(Vec5::Constant(c), mem, cfg);
    const double sg = c > 0 ? 1.0 : -1.0;
    const double expected = c + cfg.alpha1 * c * T + cfg.alpha2 * std::pow(std::abs(c), cfg.gamma) * sg * T;
    for (int i = 0; i < kJoints; ++i) CHECK(std::abs(s[i] - expected) < 1e-6);

    // alpha2 = 0: plain integral surface E + alpha1 int E
    SurfaceConfig plain = cfg;
    plain.alpha2 = 0.0;
    const Vec5 s0 = sliding_surface(Vec5::Constant(c), mem, plain);
    for (int i = 0; i < kJoints; ++i) CHECK(std::abs(s0[i] - (c + plain.alpha1 * c * T)) < 1e-9);
  }
}

TEST_CASE("switching term") {
  const ReachingGains g{1.0, 2.0, 2.0};
  CHECK(switching_term(Vec5::Zero(), g).isZero(0.0));
  CHECK(switching_term(Vec5::Zero(), g, true).isZero(0.0));
  const Vec5 up = switching_term(Vec5::Ones(), g);
  const Vec5 down = switching_term(-Vec5::Ones(), g);
  for (int i = 0; i < kJoints; ++i) {
    CHECK(up[i] == 4.0);
    CHECK(down[i] == -4.0);
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    Vec5 s;
    for (int i = 0; i < kJoints; ++i) s[i] = n(rng);
    CHECK(switching_term(-s, g) == -switching_term(s, g));
  }
}

TEST_CASE("equivalent term") {
  const SurfaceConfig cfg;
  CHECK(equivalent_term(Vec5::Zero(), ControllerMemory{}, cfg).isZero(0.0));
  const double c = 0.4, T = 1.5;
  const ControllerMemory mem = constant_history(c, T, 1e-3, cfg.gamma);
  const Vec5 lumped = (Vec5() << 1, 2, 3, 4, 5).finished();
  const Vec5 u = equivalent_term(lumped, mem, cfg);
  const double integral = cfg.alpha1 * c * T + cfg.alpha2 * std::pow(c, cfg.gamma) * T;
  for (int i = 0; i < kJoints; ++i) CHECK(std::abs(u[i] - lumped[i] - integral) < 1e-6);

  const RobotModel m = weightless();
  CHECK(lumped_dynamics(JointState{}, Vec5::Zero(), m).isZero(0.0));
}

TEST_CASE("control step: zero case and gain substitution") {
  const RobotModel m = weightless();
  ControllerMemory mem;
  const ControlOutput out = control_step(JointState{}, Vec5::Zero(), 0.0, mem, ControlLaw{}, ReachingGains{}, m);
  CHECK(out.u.isZero(0.0));
  CHECK(out.u_eq.isZero(0.0));
  CHECK(out.u_sw.isZero(0.0));

  // gains produced by the policy, fed to the fixed-gain law, give the same u
  const PolicyParams p = init_policy({}, 5);
  PolicyGains pg(p);
  const RobotModel full;
  JointState st;
  st.q = builtin_scenario(1).q0;
  st.qd = builtin_scenario(1).qd0;
  const Vec5 F = (Vec5() << 0.2, -0.1, 0.05, 0.3, -0.2).finished();
  ControllerMemory a, b;
  const SurfaceStage stage = surface_stage(F, 0.0, a, ControlLaw{}.surface);
  const ReachingGains g = pg.decide(make_observation(stage.E, stage.s, st.qd));
  const ControlOutput adaptive = finish_control(stage, st, a, ControlLaw{}, g, full);
  const ControlOutput fixed = control_step(st, F, 0.0, b, ControlLaw{}, g, full);
  CHECK(adaptive.u == fixed.u);
}

TEST_CASE("logged runs decompose u = u_eq + u_sw") {
  const RobotModel m;
  ScenarioSpec sc = builtin_scenario(1);
  sc.duration = 1.0;
  for (auto kind : {ControllerKind::kItsmc, ControllerKind::kSmc}) {
    ControllerConfig c;
    c.kind = kind;
    const TrajectoryLog log = run_scenario(m, c, sc);
    REQUIRE(log.ok());
    for (const auto& r : log.rows) REQUIRE(r.u == r.u_eq + r.u_sw);
  }
}

TEST_CASE("SMC baseline switching range") {
  const RobotModel m;
  ScenarioSpec sc = builtin_scenario(2);
  sc.duration = 2.0;
  ControllerConfig c;
  c.kind = ControllerKind::kSmc;
  const TrajectoryLog log = run_scenario(m, c, sc);
  REQUIRE(log.ok());
  for (const auto& r : log.rows)
    for (int i = 0; i < kJoints; ++i) {
      const double v = r.u_sw[i];
      REQUIRE((v == c.smc_k || v == -c.smc_k || v == 0.0));
      if (r.s[i] == 0.0) REQUIRE(v == 0.0);
    }

  // s = 0 on entry gives no switching action
  ControllerMemory mem;
  ControlLaw law;
  law.surface.alpha2 = 0.0;
  const ControlOutput out = smc_baseline_step(JointState{}, Vec5::Zero(), 0.0, mem, law, 8.0, m);
  CHECK(out.u_sw.isZero(0.0));
}

TEST_CASE("disturbance-free run stays on the surface") {
  const RobotModel m;
  ScenarioSpec sc = builtin_scenario(1);
  sc.disturbance = DisturbanceSpec{};
  sc.duration = 1.0;
  const TrajectoryLog log = run_scenario(m, ControllerConfig{}, sc);
  REQUIRE(log.ok());
  // with no tip force E = 0, so the surface and its rate stay at zero, the
  // bound the reaching law gives at s = 0
  for (std::size_t k = 1; k < log.rows.size(); ++k) {
    const Vec5 sdot = (log.rows[k].s - log.rows[k - 1].s) / sc.dt;
    const Vec5 bound = switching_term(log.rows[k].s, ControllerConfig{}.gains).cwiseAbs();
    REQUIRE((sdot.cwiseAbs().array() <= bound.array() + 1e-12).all());
  }
}

TEST_CASE("Lyapunov monitor") {
  std::vector<Vec5> zeros(50, Vec5::Zero());
  const LyapunovReport z = lyapunov_monitor(zeros, 1e-3);
  for (double v : z.V1) CHECK(v == 0.0);
  for (double v : z.V1dot) CHECK(v == 0.0);
  CHECK(z.considered == 0);

  std::vector<Vec5> two(3, Vec5::Zero());
  for (auto& s : two) s[0] = 2.0;
  CHECK(lyapunov_monitor(two, 1e-3).V1[1] == 2.0);

  // V1 = 0.5 exp(-2t) along s = exp(-t): V1dot = -exp(-2t)
  std::vector<Vec5> decay;
  const double dt = 1e-3;
  for (int k = 0; k <= 1000; ++k) {
    Vec5 s = Vec5::Zero();
    s[0] = std::exp(-k * dt);
    decay.push_back(s);
  }
  const LyapunovReport d = lyapunov_monitor(decay, dt);
  for (int k = 0; k <= 1000; k += 100) CHECK(d.V1dot[k] == doctest::Approx(-std::exp(-2.0 * k * dt)).epsilon(1e-5));
  CHECK(d.violations == 0);
}

TEST_CASE("invalid controller settings are rejected") {
  SurfaceConfig s;
  s.gamma = 2.5;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  ReachingGains g;
  g.k3 = 0.5;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = ReachingGains{};
  g.k1 = -1.0;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
}
