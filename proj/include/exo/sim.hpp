#pragma once

// Closed-loop simulation: plant + controller + external tip force.
//
// Every sample k (t_k = k dt) runs
//   F_e(t_k) -> F = J(q)^T F_e -> control -> RK4 step with u held,
// and the last sample is logged without an integration step, so a run of
// duration T produces T/dt + 1 rows.

#include "exo/model.hpp"
#include "exo/reward.hpp"
#include "exo/smc.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace exo {

enum class Waveform { kSin, kCos };

struct AxisDisturbance {
  double amplitude = 0.0;  // N
  Waveform waveform = Waveform::kSin;
  double onset = 0.0;      // s, u(t - onset) with u(0) = 1
  double frequency = 1.0;  // rad/s
  double phase = 0.0;      // rad, added to frequency * t
};

struct DisturbanceSpec {
  std::array<AxisDisturbance, 3> axes{};

  // sqrt(sum amplitude^2): bounds ||F_e(t)|| for all t.
  double norm_bound() const;
  void validate(double K) const;
};

Vec3 disturbance_eval(double t, const DisturbanceSpec& spec);

struct ScenarioSpec {
  std::string name = "custom";
  Vec5 q0 = Vec5::Zero();
  Vec5 qd0 = Vec5::Zero();
  DisturbanceSpec disturbance{};
  double duration = 10.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;

  std::size_t steps() const;  // duration / dt
  void validate(const RobotModel& model) const;
};

ScenarioSpec builtin_scenario(int id);

enum class ControllerKind { kSmc, kItsmc, kAitsmc };
const char* to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string& s);

struct ControllerConfig {
  ControllerKind kind = ControllerKind::kItsmc;
  ControlLaw law{};
  ReachingGains gains{};   // fixed ITSMC gains
  double smc_k = 8.0;      // baseline switching gain
  int policy_period = 10;  // integration steps per adaptive gain decision

  void validate() const;
};

// Policy observation: [E (5), s (5), tanh(qd / 10) (5)].
inline constexpr int kObsDim = 15;
using Observation = Eigen::Matrix<double, kObsDim, 1>;
Observation make_observation(const Vec5& E, const Vec5& s, const Vec5& qd);

// Source of reaching-law gains for the adaptive controller.
class GainSource {
 public:
  virtual ~GainSource() = default;
  virtual void reset() = 0;
  virtual ReachingGains decide(const Observation& obs) = 0;
};

class FixedGains final : public GainSource {
 public:
  explicit FixedGains(ReachingGains g) : gains_(g) {}
  void reset() override {}
  ReachingGains decide(const Observation&) override { return gains_; }

 private:
  ReachingGains gains_;
};

struct TrajectoryRow {
  double t = 0.0;
  Vec5 q, qd;
  Vec3 xe, Fe;
  Vec5 F, E, s, u, u_eq, u_sw;
  ReachingGains gains{};
  double V1 = 0.0;
  double reward = 0.0;
};

struct TrajectoryLog {
  double dt = 0.0;
  std::vector<TrajectoryRow> rows;
  std::string fault;  // non-empty when the run aborted; rows hold the partial log

  bool ok() const { return fault.empty(); }
};

// Classical RK4 on any fixed-size Eigen vector.
template <class Vec, class Fn>
Vec rk4(const Vec& x, double t, double dt, Fn&& f) {
  const Vec k1 = f(t, x);
  const Vec k2 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k1));
  const Vec k3 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k2));
  const Vec k4 = f(t + dt, Vec(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

using AccelFn = std::function<Vec5(double t, const Vec5& q, const Vec5& qd)>;

struct Rk4Result {
  JointState next;
  Vec5 qdd_start;  // acceleration at the start of the step
};

// One RK4 step of the 10-dimensional (q, qd) state.
Rk4Result rk4_step(const JointState& state, double t, double dt, const AccelFn& accel);

// Plant acceleration under a held control u with the tip force re-evaluated
// at every stage.
Vec5 plant_acceleration(double t, const Vec5& q, const Vec5& qd, const Vec5& u, const RobotModel& model,
                        const DisturbanceSpec& dist);

// Step-by-step closed loop shared by run_scenario and the training
// environment.
class ClosedLoop {
 public:
  ClosedLoop(const RobotModel& model, const ControllerConfig& controller, const ScenarioSpec& scenario,
             const RewardConfig& reward_cfg = {});

  std::size_t index() const { return k_; }
  double time() const { return static_cast<double>(k_) * scenario_.dt; }
  bool done() const { return k_ > n_steps_; }
  const JointState& state() const { return state_; }

  // Error and surface at the current sample; also the adaptive observation.
  const SurfaceStage& stage();
  Observation observation();

  // Builds the control with the given gains (ignored by the SMC baseline),
  // logs the sample, and integrates to the next sample unless this is the
  // final one.
  TrajectoryRow act(const ReachingGains& gains);

 private:
  RobotModel model_;
  ControllerConfig controller_;
  ScenarioSpec scenario_;
  RewardConfig reward_cfg_;
  std::size_t n_steps_;
  std::size_t k_ = 0;
  JointState state_;
  ControllerMemory mem_;
  std::optional<SurfaceStage> stage_;
  Vec3 Fe_ = Vec3::Zero();
  Vec5 F_ = Vec5::Zero();
};

TrajectoryLog run_scenario(const RobotModel& model, const ControllerConfig& controller, const ScenarioSpec& scenario,
                           GainSource* gains = nullptr, const RewardConfig& reward_cfg = {});

// CSV with the documented header; numbers printed with 17 significant digits.
std::string trajectory_csv_header();
void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log);
TrajectoryLog read_trajectory_csv(std::istream& is);

}  // namespace exo
