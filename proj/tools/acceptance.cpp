// Acceptance runner: one PASS/FAIL line per criterion, then supplementary
// measurements. Exit status is 0 only when every criterion passes.
//
//   acceptance [--config FILE] [--out DIR] [--policy FILE]
//
// Without --policy the adaptive controller is trained from the config
// (shipped default: configs/default.json), which takes several minutes.

#include "cli.hpp"
#include "exo/config.hpp"
#include "exo/grad.hpp"
#include "exo/metrics.hpp"
#include "exo/ppo.hpp"
#include "exo/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace exo;
namespace fs = std::filesystem;

namespace {

struct Line {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double max_error_after(const TrajectoryLog& log, double t_from) {
  double m = 0.0;
  for (const auto& r : log.rows)
    if (r.t > t_from) m = std::max(m, r.E.cwiseAbs().maxCoeff());
  return m;
}

TrajectoryLog run(const RunConfig& cfg, ControllerKind kind, int scenario, const PolicyParams* policy = nullptr,
                  double dt = 0.0) {
  ControllerConfig c = cfg.controller;
  c.kind = kind;
  ScenarioSpec s = builtin_scenario(scenario);
  if (dt > 0.0) s.dt = dt;
  std::optional<PolicyGains> g;
  if (policy) g.emplace(*policy);
  return run_scenario(cfg.model, c, s, g ? &*g : nullptr);
}

Line criterion6() {
  bool ok = clipped_surrogate(1.5, 1.0, 0.2) == 1.2 && clipped_surrogate(0.5, -1.0, 0.2) == -0.8;

  const PolicyParams p = init_policy({}, 6);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  auto transition = [&](double reward, double value, bool done) {
    Transition t;
    VecX o(p.arch.obs_dim);
    for (auto& v : o) v = g(rng);
    t.seq.obs.push_back(o);
    t.seq.h0 = VecX::Zero(p.arch.hidden);
    t.seq.c0 = VecX::Zero(p.arch.hidden);
    const SequenceForward f = forward_sequence(p, t.seq);
    for (int j = 0; j < 3; ++j) t.action[j] = f.dist.mean[j] + std::exp(f.dist.log_std[j]) * g(rng);
    t.log_prob_old = log_prob_entropy(f.dist, t.action).log_prob;
    t.reward = reward;
    t.value_old = value;
    t.done = done;
    return t;
  };

  // ratio 1: surrogate is the mean advantage
  std::vector<PpoSample> batch;
  double sum = 0.0;
  for (int k = 0; k < 16; ++k) {
    const Transition t = transition(0.0, 0.0, false);
    PpoSample s;
    s.seq = t.seq;
    s.action = t.action;
    s.log_prob_old = t.log_prob_old;
    s.advantage = g(rng);
    sum += s.advantage;
    batch.push_back(s);
  }
  PpoConfig cfg;
  cfg.loss.beta = 0.0;
  ok = ok && surrogate_objective(batch, p, cfg).surrogate == sum / 16.0;

  // GAE with lambda = 1 against brute-force discounted returns
  const int n = 60;
  std::vector<double> r(n), v(n);
  std::vector<bool> done(n);
  RolloutBuffer buf;
  for (int k = 0; k < n; ++k) {
    r[k] = g(rng);
    v[k] = g(rng);
    done[k] = k % 17 == 16;
    buf.push(transition(r[k], v[k], done[k]));
  }
  const double discount = 0.99, boot = -0.4;
  buf.compute_advantages(discount, 1.0, boot);
  double worst = 0.0;
  for (int t = 0; t < n; ++t) {
    double ret = 0.0, w = 1.0;
    int k = t;
    for (; k < n; ++k) {
      ret += w * r[k];
      w *= discount;
      if (done[k]) break;
    }
    if (k == n) ret += w * boot;
    worst = std::max(worst, std::abs(buf.raw_advantages()[t] - (ret - v[t])));
  }
  ok = ok && worst < 1e-10;
  return {ok, "clip cases exact, ratio-1 surrogate exact, GAE max err " + num(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string config_file = std::string(EXO_SOURCE_DIR) + "/configs/default.json";
  std::string out = "acceptance_out";
  std::string policy_file;
  app.add_option("--config", config_file, "config used for training and evaluation");
  app.add_option("--out", out, "working directory for generated files");
  app.add_option("--policy", policy_file, "use this trained policy instead of training");
  CLI11_PARSE(app, argc, argv);

  const RunConfig cfg = load_config_file(config_file);
  const fs::path dir = fs::absolute(out);
  fs::create_directories(dir);
  std::map<int, Line> lines;
  std::vector<std::string> extra;
  auto progress = [](const std::string& s) { std::cerr << "[acceptance] " << s << std::endl; };

  {
    progress("1 kinematics");
    const auto t0 = std::chrono::steady_clock::now();
    const JacobianCheck j = check_jacobian(cfg.model, 99, 1);
    const double t = seconds_since(t0);
    lines[1] = {j.max_abs_error < 1e-6 && t < 1.0,
                std::to_string(j.configurations) + " q, max |J - J_fd| " + num(j.max_abs_error) + ", " + num(t) + " s"};
  }
  {
    progress("2 dynamics structure");
    const auto t0 = std::chrono::steady_clock::now();
    const DynamicsCheck d = check_dynamics(cfg.model, 1000, 2);
    const double t = seconds_since(t0);
    lines[2] = {d.symmetric && d.min_eigenvalue > 0.0 && d.max_skew_residual < 1e-9 && d.max_gravity_error < 1e-8 &&
                    t < 10.0,
                std::string("symmetric ") + (d.symmetric ? "yes" : "no") + ", min eig " + num(d.min_eigenvalue) +
                    ", skew " + num(d.max_skew_residual) + ", |G - dU/dq| " + num(d.max_gravity_error) + ", " +
                    num(t) + " s"};
  }
  {
    progress("3 conservation");
    const ScenarioSpec s1 = builtin_scenario(1);
    const EnergyCheck e = check_energy(cfg.model, s1.q0, s1.qd0, 5.0, 1e-3);
    lines[3] = {e.max_relative_drift < 1e-6, "relative drift " + num(e.max_relative_drift)};
  }
  {
    progress("4 integrator order");
    const OrderCheck o = check_rk4_order();
    lines[4] = {o.ratio >= 14.0 && o.ratio <= 18.0, "error ratio " + num(o.ratio)};
  }
  {
    progress("5 gradient fidelity");
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckOptions opt;
    opt.parameters = 200;
    const GradCheckReport r = gradient_check(cfg.arch, 42, opt);
    const double t = seconds_since(t0);
    lines[5] = {r.passed() && r.checked >= 200 && r.max_rel < 1e-5 && t < 30.0,
                std::to_string(r.checked) + " parameters, " + std::to_string(r.failed) + " failed, max rel " +
                    num(r.max_rel) + ", " + num(t) + " s"};
  }
  progress("6 PPO arithmetic");
  lines[6] = criterion6();

  progress("baseline runs");
  std::map<std::pair<int, ControllerKind>, TrajectoryLog> logs;
  for (int s : {1, 2})
    for (auto k : {ControllerKind::kSmc, ControllerKind::kItsmc}) logs[{s, k}] = run(cfg, k, s);
  {
    progress("7 Lyapunov descent");
    bool ok = true;
    std::string d;
    for (int s : {1, 2}) {
      const TrajectoryLog& log = logs[{s, ControllerKind::kItsmc}];
      std::vector<Vec5> sv;
      for (const auto& r : log.rows) sv.push_back(r.s);
      const LyapunovReport lr = lyapunov_monitor(sv, log.dt);
      ok = ok && log.ok() && lr.violations == 0;
      d += "scenario " + std::to_string(s) + ": " + std::to_string(lr.violations) + "/" +
           std::to_string(lr.considered) + " samples with V1dot > 1e-6 (max " + num(lr.max_V1dot_outside_band) + ")";
      if (s == 1) d += "; ";
    }
    lines[7] = {ok, d};
  }
  {
    progress("9 chattering and energy");
    const auto t0 = std::chrono::steady_clock::now();
    const MetricsReport smc = compute_metrics(run(cfg, ControllerKind::kSmc, 1));
    const MetricsReport it = compute_metrics(run(cfg, ControllerKind::kItsmc, 1));
    const double t = seconds_since(t0);
    const double acm = it.acm / smc.acm, ce = it.ce / smc.ce;
    lines[9] = {acm <= cli::kChatterRatio && ce <= cli::kChatterRatio && t < 60.0,
                "ACM ratio " + num(acm) + ", CE ratio " + num(ce) + " (limit 0.2), " + num(t) + " s"};
  }
  {
    progress("11 disturbance fidelity");
    const auto d1 = builtin_scenario(1).disturbance, d2 = builtin_scenario(2).disturbance;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    double worst = 0.0;
    bool gated = true;
    for (int k = 0; k < 10000; ++k) {
      const double t = u(rng);
      const Vec3 a(std::sin(t) * (t >= 2.0), 0.1 * std::cos(t) * (t >= 1.0), 0.2 * std::sin(t));
      const Vec3 b(1.2 * std::sin(t), 1.2 * std::cos(t) * (t >= 5.0), -1.5 * std::cos(t) * (t >= 4.0));
      worst = std::max(worst, (disturbance_eval(t, d1) - a).cwiseAbs().maxCoeff());
      worst = std::max(worst, (disturbance_eval(t, d2) - b).cwiseAbs().maxCoeff());
    }
    gated = disturbance_eval(std::nextafter(2.0, 0.0), d1)[0] == 0.0 &&
            disturbance_eval(std::nextafter(1.0, 0.0), d1)[1] == 0.0 &&
            disturbance_eval(std::nextafter(5.0, 0.0), d2)[1] == 0.0 &&
            disturbance_eval(std::nextafter(4.0, 0.0), d2)[2] == 0.0;
    lines[11] = {worst <= 1e-12 && gated,
                 "max err " + num(worst) + " at 1e4 times, gating " + (gated ? "exact" : "broken")};
  }
  {
    progress("12 determinism");
    auto sim = [&](const std::string& tag) {
      const fs::path d = dir / ("det_sim_" + tag);
      const int rc = cli::run({"simulate", "-c", config_file, "--controller", "itsmc", "-o", d.string()});
      return rc == 0 ? slurp(d / "trajectory.csv") : std::string("rc") + std::to_string(rc);
    };
    auto tr = [&](const std::string& tag) {
      const fs::path d = dir / ("det_train_" + tag);
      const int rc = cli::run({"train", "-c", config_file, "--iterations", "2", "-o", d.string()});
      return rc == 0 ? slurp(d / "train_log.csv") : std::string("rc") + std::to_string(rc);
    };
    const std::string sa = sim("a"), sb = sim("b"), ta = tr("a"), tb = tr("b");
    const bool ok = sa.size() > 100 && sa == sb && ta.size() > 100 && ta == tb;
    lines[12] = {ok, std::string("trajectory CSVs ") + (sa == sb ? "identical" : "differ") + " (" +
                         std::to_string(sa.size()) + " bytes), training logs " + (ta == tb ? "identical" : "differ")};
  }

  // adaptive controller
  PolicyParams policy;
  double train_seconds = 0.0;
  if (policy_file.empty()) {
    progress("10 training (" + std::to_string(cfg.ppo.iterations) + " iterations)");
    const fs::path d = dir / "train";
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = cli::run({"train", "-c", config_file, "-o", d.string()});
    train_seconds = seconds_since(t0);
    if (rc != 0) {
      std::cerr << "training failed with exit code " << rc << "\n";
      return 1;
    }
    policy_file = (d / "policy_final.json").string();

    // mean episode reward at iteration 49 (after 50 iterations) vs iteration 0
    std::istringstream log(slurp(d / "train_log.csv"));
    std::string line;
    std::getline(log, line);
    std::map<int, double> episode_reward;
    while (std::getline(log, line)) {
      std::vector<std::string> cells;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
      episode_reward[std::stoi(cells[0])] = std::stod(cells[4]);
    }
    if (episode_reward.count(0) && episode_reward.count(49)) {
      const bool up = episode_reward[49] > episode_reward[0];
      extra.push_back(std::string(up ? "PASS" : "FAIL") + "  training progress: mean episode reward iteration 49 " +
                      num(episode_reward[49]) + " vs iteration 0 " + num(episode_reward[0]));
    }
  }
  {
    std::ifstream f(policy_file);
    policy = load_policy(f);
  }
  std::map<int, TrajectoryLog> adaptive;
  for (int s : {1, 2}) adaptive[s] = run(cfg, ControllerKind::kAitsmc, s, &policy);

  {
    bool ok = true;
    std::string d;
    for (int s : {1, 2}) {
      const double it = max_error_after(logs[{s, ControllerKind::kItsmc}], 5.0);
      const double ad = max_error_after(adaptive[s], 5.0);
      ok = ok && it < 1e-2 && ad < 1e-2 && adaptive[s].ok();
      d += "scenario " + std::to_string(s) + ": max |E| after 5 s ITSMC " + num(it) + ", AITSMC " + num(ad);
      if (s == 1) d += "; ";
    }
    lines[8] = {ok, d};
  }
  {
    bool ok = true;
    std::string d;
    for (int s : {1, 2}) {
      if (!adaptive[s].ok()) {
        ok = false;
        d += "scenario " + std::to_string(s) + " AITSMC fault: " + adaptive[s].fault + "; ";
        continue;
      }
      const MetricsReport it = compute_metrics(logs[{s, ControllerKind::kItsmc}]);
      const MetricsReport ad = compute_metrics(adaptive[s]);
      const double ise = ad.ise / it.ise, itse = ad.itse / it.itse;
      ok = ok && ise <= cli::kTrackingRatio && itse <= cli::kTrackingRatio;
      d += "scenario " + std::to_string(s) + ": ISE ratio " + num(ise) + ", ITSE ratio " + num(itse) + "; ";
    }
    if (train_seconds > 0.0) {
      ok = ok && train_seconds <= 1800.0;
      d += "training " + num(train_seconds) + " s";
    } else {
      d += "policy from " + policy_file;
    }
    lines[10] = {ok, d + " (limit 0.7)"};
  }

  // final-state norm under dt halving
  for (int s : {1, 2}) {
    const TrajectoryLog a = run(cfg, ControllerKind::kItsmc, s);
    const TrajectoryLog b = run(cfg, ControllerKind::kItsmc, s, nullptr, 0.5 * builtin_scenario(s).dt);
    auto norm = [](const TrajectoryRow& r) { return std::sqrt(r.q.squaredNorm() + r.qd.squaredNorm()); };
    const double na = norm(a.rows.back()), nb = norm(b.rows.back());
    const double rel = std::abs(na - nb) / std::max(na, 1e-300);
    extra.push_back(std::string(rel < 1e-6 ? "PASS" : "FAIL") + "  self-convergence scenario " + std::to_string(s) +
                    " (ITSMC): final-state norm " + num(na) + " vs " + num(nb) + " at dt/2, relative change " +
                    num(rel) + " (limit 1e-6)");
  }

  int failed = 0;
  for (const auto& [id, l] : lines) {
    std::printf("criterion %2d: %s  %s\n", id, l.pass ? "PASS" : "FAIL", l.detail.c_str());
    failed += l.pass ? 0 : 1;
  }
  std::printf("supplementary:\n");
  for (const auto& e : extra) std::printf("  %s\n", e.c_str());
  std::printf("%d of %zu criteria passed\n", static_cast<int>(lines.size()) - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
