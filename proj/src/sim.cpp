#include "exo/sim.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace exo {

double DisturbanceSpec::norm_bound() const {
  double s = 0.0;
  for (const auto& a : axes) s += a.amplitude * a.amplitude;
  return std::sqrt(s);
}

void DisturbanceSpec::validate(double K) const {
  for (const auto& a : axes) {
    if (!std::isfinite(a.amplitude) || !std::isfinite(a.frequency) ||
        !std::isfinite(a.phase)) throw InvalidArgument("disturbance must be finite");
    if (!(a.onset >= 0.0) || !std::isfinite(a.onset)) throw InvalidArgument("disturbance onset must be >= 0");
  }
  if (norm_bound() > K) throw InvalidArgument("disturbance can exceed the tip-force bound K");
}

Vec3 disturbance_eval(double t, const DisturbanceSpec& spec) {
  if (!(t >= 0.0)) throw InvalidArgument("disturbance time must be >= 0");
  Vec3 f;
  for (int i = 0; i < 3; ++i) {
    const auto& a = spec.axes[i];
    if (t < a.onset) {
      f[i] = 0.0;
      continue;
    }
    const double w = a.frequency * t + a.phase;
    f[i] = a.amplitude * (a.waveform == Waveform::kSin ? std::sin(w) : std::cos(w));
  }
  return f;
}

std::size_t ScenarioSpec::steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

void ScenarioSpec::validate(const RobotModel& model) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be > 0");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw InvalidArgument("duration must be > 0");
  const double n = duration / dt;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
    throw InvalidArgument("duration must be a multiple of dt");
  if (!q0.allFinite() || !qd0.allFinite()) throw InvalidArgument("initial state must be finite");
  disturbance.validate(model.force_bound);
}

ScenarioSpec builtin_scenario(int id) {
  ScenarioSpec s;
  if (id == 1) {
    s.name = "scenario1";
    s.q0 << 0.4, 0.4, -0.1, -0.1, 0.1;
    s.qd0 << -0.4, 0.6, -1.5, -1.5, 1.0;
    s.disturbance.axes[0] = {1.0, Waveform::kSin, 2.0, 1.0};
    s.disturbance.axes[1] = {0.1, Waveform::kCos, 1.0, 1.0};
    s.disturbance.axes[2] = {0.2, Waveform::kSin, 0.0, 1.0};
  } else if (id == 2) {
    s.name = "scenario2";
    s.q0 << -0.4, 0.8, 0.4, -1.7, 1.1;
    s.qd0 << -0.4, 0.8, 0.4, -1.7, 1.1;
    s.disturbance.axes[0] = {1.2, Waveform::kSin, 0.0, 1.0};
    s.disturbance.axes[1] = {1.2, Waveform::kCos, 5.0, 1.0};
    s.disturbance.axes[2] = {-1.5, Waveform::kCos, 4.0, 1.0};
  } else {
    throw InvalidArgument("built-in scenario id must be 1 or 2");
  }
  return s;
}

const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kSmc:
      return "smc";
    case ControllerKind::kItsmc:
      return "itsmc";
    case ControllerKind::kAitsmc:
      return "aitsmc";
  }
  return "?";
}

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "smc") return ControllerKind::kSmc;
  if (s == "itsmc") return ControllerKind::kItsmc;
  if (s == "aitsmc") return ControllerKind::kAitsmc;
  throw InvalidArgument("unknown controller kind '" + s + "'");
}

void ControllerConfig::validate() const {
  law.surface.validate();
  gains.validate();
  if (!(smc_k > 0.0)) throw InvalidArgument("smc k must be > 0");
  if (policy_period < 1) throw InvalidArgument("policy period must be >= 1");
}

Observation make_observation(const Vec5& E, const Vec5& s, const Vec5& qd) {
  Observation o;
  o.segment<5>(0) = E;
  o.segment<5>(5) = s;
  o.segment<5>(10) = (qd / 10.0).array().tanh().matrix();
  return o;
}

Rk4Result rk4_step(const JointState& state, double t, double dt, const AccelFn& accel) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  using V10 = Eigen::Matrix<double, 10, 1>;
  V10 x;
  x << state.q, state.qd;
  Vec5 qdd_start = Vec5::Zero();
  bool first = true;
  auto f = [&](double tt, const V10& y) -> V10 {
    const Vec5 qdd = accel(tt, y.head<5>(), y.tail<5>());
    if (!qdd.allFinite()) throw IntegrationFault("non-finite derivative at t = " + std::to_string(tt));
    if (first) {
      qdd_start = qdd;
      first = false;
    }
    V10 d;
    d << y.tail<5>(), qdd;
    return d;
  };
  const V10 y = rk4(x, t, dt, f);
  if (!y.allFinite()) throw IntegrationFault("non-finite state after step at t = " + std::to_string(t));
  Rk4Result r;
  r.next.q = y.head<5>();
  r.next.qd = y.tail<5>();
  r.next.qdd = qdd_start;
  r.qdd_start = qdd_start;
  return r;
}

Vec5 plant_acceleration(double t, const Vec5& q, const Vec5& qd, const Vec5& u, const RobotModel& model,
                        const DisturbanceSpec& dist) {
  JointState s;
  s.q = q;
  s.qd = qd;
  const Vec5 F = tip_force_to_joint_torques(jacobian(q, model.geometry), TipForce{disturbance_eval(t, dist)});
  return forward_dynamics(s, u, F, model);
}

ClosedLoop::ClosedLoop(const RobotModel& model, const ControllerConfig& controller, const ScenarioSpec& scenario,
                       const RewardConfig& reward_cfg)
    : model_(model), controller_(controller), scenario_(scenario), reward_cfg_(reward_cfg) {
  model_.validate();
  controller_.validate();
  scenario_.validate(model_);
  n_steps_ = scenario_.steps();
  state_.q = scenario_.q0;
  state_.qd = scenario_.qd0;
}

const SurfaceStage& ClosedLoop::stage() {
  if (!stage_) {
    const double t = time();
    Fe_ = disturbance_eval(t, scenario_.disturbance);
    F_ = tip_force_to_joint_torques(jacobian(state_.q, model_.geometry), TipForce{Fe_});
    SurfaceConfig surf = controller_.law.surface;
    if (controller_.kind == ControllerKind::kSmc) surf.alpha2 = 0.0;
    stage_ = surface_stage(F_, t, mem_, surf);
  }
  return *stage_;
}

Observation ClosedLoop::observation() {
  const SurfaceStage& st = stage();
  return make_observation(st.E, st.s, state_.qd);
}

TrajectoryRow ClosedLoop::act(const ReachingGains& gains) {
  if (done()) throw InvalidArgument("closed loop already finished");
  const SurfaceStage st = stage();
  const double t = st.t;

  ControlOutput out;
  if (controller_.kind == ControllerKind::kSmc) {
    out = finish_baseline(st, state_, mem_, controller_.law, controller_.smc_k, model_);
  } else {
    out = finish_control(st, state_, mem_, controller_.law, gains, model_);
  }

  TrajectoryRow row;
  row.t = t;
  row.q = state_.q;
  row.qd = state_.qd;
  row.xe = end_effector_position(state_.q, model_.geometry);
  row.Fe = Fe_;
  row.F = F_;
  row.E = out.E;
  row.s = out.s;
  row.u = out.u;
  row.u_eq = out.u_eq;
  row.u_sw = out.u_sw;
  row.gains = out.gains_used;
  row.V1 = 0.5 * out.s.squaredNorm();
  row.reward = reward(out.s, out.u, k_ == 0 ? out.u : mem_.prev_u, reward_cfg_);

  if (k_ < n_steps_) {
    const Vec5 u = out.u;
    const auto accel = [&](double tt, const Vec5& q, const Vec5& qd) {
      return plant_acceleration(tt, q, qd, u, model_, scenario_.disturbance);
    };
    const Rk4Result r = rk4_step(state_, t, scenario_.dt, accel);
    commit_step(mem_, r.qdd_start, out.u);
    state_ = r.next;
    if (state_.q.cwiseAbs().maxCoeff() > model_.state_cap || state_.qd.cwiseAbs().maxCoeff() > model_.state_cap)
      throw IntegrationFault("joint state left the admissible bound at t = " + std::to_string(t + scenario_.dt));
  } else {
    commit_step(mem_, mem_.prev_qdd, out.u);
  }
  ++k_;
  stage_.reset();
  return row;
}

TrajectoryLog run_scenario(const RobotModel& model, const ControllerConfig& controller, const ScenarioSpec& scenario,
                           GainSource* gains, const RewardConfig& reward_cfg) {
  if (controller.kind == ControllerKind::kAitsmc && gains == nullptr)
    throw InvalidArgument("the adaptive controller needs a gain source");
  ClosedLoop loop(model, controller, scenario, reward_cfg);
  TrajectoryLog log;
  log.dt = scenario.dt;
  log.rows.reserve(scenario.steps() + 1);
  if (gains) gains->reset();
  ReachingGains held = controller.gains;
  try {
    while (!loop.done()) {
      if (controller.kind == ControllerKind::kAitsmc &&
          loop.index() % static_cast<std::size_t>(controller.policy_period) == 0)
        held = gains->decide(loop.observation());
      log.rows.push_back(loop.act(held));
    }
  } catch (const std::exception& e) {
    log.fault = e.what();
  }
  return log;
}

namespace {

void append_vec(std::vector<std::string>& cols, const char* prefix, int n) {
  for (int i = 1; i <= n; ++i) cols.push_back(std::string(prefix) + std::to_string(i));
}

std::vector<std::string> column_names() {
  std::vector<std::string> c{"t"};
  append_vec(c, "q", 5);
  append_vec(c, "qd", 5);
  append_vec(c, "xe", 3);
  append_vec(c, "Fe", 3);
  append_vec(c, "F", 5);
  append_vec(c, "E", 5);
  append_vec(c, "s", 5);
  append_vec(c, "u", 5);
  append_vec(c, "ueq", 5);
  append_vec(c, "usw", 5);
  c.insert(c.end(), {"k1", "k2", "k3", "V1", "reward"});
  return c;
}

void put(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  if (!line.empty()) line.push_back(',');
  line.append(buf);
}

template <int N>
void put(std::string& line, const Eigen::Matrix<double, N, 1>& v) {
  for (int i = 0; i < N; ++i) put(line, v[i]);
}

}  // namespace

std::string trajectory_csv_header() {
  std::string h;
  for (const auto& c : column_names()) {
    if (!h.empty()) h.push_back(',');
    h += c;
  }
  return h;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
  os << trajectory_csv_header() << '\n';
  std::string line;
  for (const auto& r : log.rows) {
    line.clear();
    put(line, r.t);
    put(line, r.q);
    put(line, r.qd);
    put(line, r.xe);
    put(line, r.Fe);
    put(line, r.F);
    put(line, r.E);
    put(line, r.s);
    put(line, r.u);
    put(line, r.u_eq);
    put(line, r.u_sw);
    put(line, r.gains.k1);
    put(line, r.gains.k2);
    put(line, r.gains.k3);
    put(line, r.V1);
    put(line, r.reward);
    os << line << '\n';
  }
}

TrajectoryLog read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty trajectory CSV");
  std::map<std::string, int> index;
  {
    std::stringstream ss(line);
    std::string name;
    int i = 0;
    while (std::getline(ss, name, ',')) index[name] = i++;
  }
  for (const auto& c : column_names())
    if (!index.count(c)) throw InvalidArgument("trajectory CSV is missing column '" + c + "'");

  TrajectoryLog log;
  std::vector<double> v;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    v.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != index.size()) throw InvalidArgument("ragged trajectory CSV row");
    auto at = [&](const std::string& name) { return v[static_cast<std::size_t>(index.at(name))]; };
    auto vec5 = [&](const char* p) {
      Vec5 x;
      for (int i = 0; i < 5; ++i) x[i] = at(p + std::to_string(i + 1));
      return x;
    };
    auto vec3 = [&](const char* p) {
      Vec3 x;
      for (int i = 0; i < 3; ++i) x[i] = at(p + std::to_string(i + 1));
      return x;
    };
    TrajectoryRow r;
    r.t = at("t");
    r.q = vec5("q");
    r.qd = vec5("qd");
    r.xe = vec3("xe");
    r.Fe = vec3("Fe");
    r.F = vec5("F");
    r.E = vec5("E");
    r.s = vec5("s");
    r.u = vec5("u");
    r.u_eq = vec5("ueq");
    r.u_sw = vec5("usw");
    r.gains = ReachingGains{at("k1"), at("k2"), at("k3")};
    r.V1 = at("V1");
    r.reward = at("reward");
    log.rows.push_back(r);
  }
  if (log.rows.size() >= 2) log.dt = log.rows[1].t - log.rows[0].t;
  return log;
}

}  // namespace exo
