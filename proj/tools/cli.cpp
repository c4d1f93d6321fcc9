#include "cli.hpp"

#include "exo/config.hpp"
#include "exo/grad.hpp"
#include "exo/metrics.hpp"
#include "exo/policy.hpp"
#include "exo/ppo.hpp"
#include "exo/sim.hpp"
#include "exo/verify.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef EXO_VERSION
#define EXO_VERSION "0.0.0"
#endif

namespace exo::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ThresholdViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// FNV-1a, enough to pin the exact policy file a run used.
std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Options shared by every run command.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output_dir;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override a config key, e.g. --set ppo.iterations=20")->take_all();
    app->add_option("--seed", seed, "master seed");
    app->add_option("-o,--output-dir", output_dir, "output directory");
  }
};

// "a.b.c=value" -> {"a": {"b": {"c": value}}}; value is JSON when it parses,
// a string otherwise.
void merge_set(nlohmann::json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("bad key in --set '" + kv + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (!node->is_object()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

RunConfig resolve(const Common& c, const nlohmann::json& extra) {
  RunConfig cfg;
  if (!c.config_file.empty()) cfg = load_config_file(c.config_file, cfg);
  nlohmann::json doc = extra.is_null() ? nlohmann::json::object() : extra;
  for (const auto& s : c.sets) merge_set(doc, s);
  if (c.seed) doc["seed"] = *c.seed;
  if (!c.output_dir.empty()) doc["output_dir"] = c.output_dir;
  return apply_config(doc, cfg);
}

fs::path prepare_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

ojson manifest(const std::string& command, const RunConfig& cfg) {
  ojson m;
  m["tool"] = "exo";
  m["version"] = EXO_VERSION;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  return m;
}

void write_manifest(const fs::path& dir, const ojson& m) { write_atomic(dir / "run-manifest.json", m.dump(2) + "\n"); }

struct LoadedPolicy {
  PolicyParams params;
  int iteration = -1;
  std::string path, hash;
};

LoadedPolicy read_policy(const std::string& path) {
  LoadedPolicy lp;
  const std::string text = read_file(path);
  std::istringstream is(text);
  lp.params = load_policy(is, &lp.iteration);
  lp.path = path;
  lp.hash = fnv1a_hex(text);
  return lp;
}

std::string scenario_label(const RunConfig& cfg) {
  return cfg.builtin_scenario ? "scenario" + std::to_string(cfg.builtin_scenario) : cfg.scenario.name;
}

RewardConfig reward_config(const RunConfig& cfg) {
  RewardConfig r;
  r.lambda_pen = cfg.ppo.lambda_pen;
  r.w_chatter = cfg.ppo.w_chatter;
  return r;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::string controller, policy;
  std::optional<int> scenario;
};

int cmd_simulate(const SimulateArgs& a) {
  nlohmann::json extra = nlohmann::json::object();
  if (!a.controller.empty()) extra["controller"]["kind"] = a.controller;
  if (a.scenario) extra["scenario"]["builtin"] = *a.scenario;
  const RunConfig cfg = resolve(a.common, extra);
  const bool adaptive = cfg.controller.kind == ControllerKind::kAitsmc;
  if (adaptive && a.policy.empty()) throw UsageError("controller aitsmc needs --policy");
  if (!adaptive && !a.policy.empty()) throw UsageError("--policy only applies to controller aitsmc");

  std::optional<LoadedPolicy> pol;
  std::optional<PolicyGains> gains;
  if (adaptive) {
    pol = read_policy(a.policy);
    gains.emplace(pol->params);
  }
  const TrajectoryLog log =
      run_scenario(cfg.model, cfg.controller, cfg.scenario, gains ? &*gains : nullptr, reward_config(cfg));

  const fs::path dir = prepare_dir(cfg);
  std::ostringstream csv;
  write_trajectory_csv(csv, log);
  write_atomic(dir / "trajectory.csv", csv.str());
  ojson m = manifest("simulate", cfg);
  if (pol) m["policy"] = {{"path", pol->path}, {"fnv1a", pol->hash}, {"iteration", pol->iteration}};
  m["rows"] = log.rows.size();
  if (!log.ok()) {
    m["fault"] = log.fault;
    write_manifest(dir, m);
    throw std::runtime_error("simulation fault: " + log.fault);
  }
  const MetricsReport r = compute_metrics(log, to_string(cfg.controller.kind), scenario_label(cfg));
  write_atomic(dir / "metrics.json", metrics_json(r));
  write_manifest(dir, m);
  std::cout << metrics_json(r);
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string resume;
  std::optional<int> iterations;
};

int cmd_train(const TrainArgs& a) {
  nlohmann::json extra = nlohmann::json::object();
  if (a.iterations) extra["ppo"]["iterations"] = *a.iterations;
  RunConfig cfg = resolve(a.common, extra);
  cfg.controller.kind = ControllerKind::kAitsmc;

  std::vector<ScenarioSpec> scenarios;
  for (int id : cfg.train_scenarios) {
    ScenarioSpec s = builtin_scenario(id);
    s.duration = cfg.scenario.duration;
    s.dt = cfg.scenario.dt;
    s.seed = cfg.seed;
    scenarios.push_back(s);
  }

  const fs::path dir = prepare_dir(cfg);
  PolicyParams init;
  int first = 0;
  std::optional<AdamState> adam0;
  ojson m = manifest("train", cfg);
  std::string log_text = train_log_header() + "\n";
  if (!a.resume.empty()) {
    const std::string text = read_file(a.resume);
    std::istringstream is(text);
    Checkpoint ck = load_checkpoint(is);
    if (ck.iteration < 0) throw UsageError("'" + a.resume + "' carries no iteration counter");
    init = ck.params;
    first = ck.iteration + 1;
    adam0 = ck.adam;
    m["resumed_from"] = {{"path", a.resume}, {"fnv1a", fnv1a_hex(text)}, {"iteration", ck.iteration}};
    // keep the rows of the iterations the checkpoint already covers
    if (fs::exists(dir / "train_log.csv")) {
      std::istringstream is(read_file(dir / "train_log.csv"));
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line))
        if (!line.empty() && std::stoi(line) < first) log_text += line + "\n";
    }
  } else {
    init = init_policy(cfg.arch, cfg.seed, cfg.controller.gains, cfg.ppo.init_log_std);
  }
  m["first_iteration"] = first;
  write_manifest(dir, m);

  const auto hook = [&](const PolicyParams& p, const TrainStats& s, const AdamState& adam) {
    log_text += train_log_row(s) + "\n";
    write_atomic(dir / "train_log.csv", log_text);
    if ((s.iteration + 1) % cfg.checkpoint_every == 0 || s.iteration + 1 == cfg.ppo.iterations)
    {
      std::ostringstream os;
      save_checkpoint(os, p, s.iteration, adam);
      write_atomic(dir / ("policy_iter_" + std::to_string(s.iteration) + ".json"), os.str());
    }
    std::cerr << "iteration " << s.iteration << "  mean reward " << s.mean_reward << "  k=(" << s.mean_k1 << ", "
              << s.mean_k2 << ", " << s.mean_k3 << ")\n";
  };

  write_atomic(dir / "train_log.csv", log_text);
  const TrainResult r = train(cfg.model, cfg.controller, scenarios, init, cfg.ppo, hook, first, Exec::kParallel,
                              adam0 ? &*adam0 : nullptr);
  std::ostringstream os;
  save_policy(os, r.params, std::max(first, cfg.ppo.iterations) - 1);
  write_atomic(dir / "policy_final.json", os.str());
  return kOk;
}

// ---- compare --------------------------------------------------------------

struct CompareArgs {
  Common common;
  std::string policy;
  std::optional<int> scenario;
  bool no_aitsmc = false;
};

int cmd_compare(const CompareArgs& a) {
  nlohmann::json extra = nlohmann::json::object();
  if (a.scenario) extra["scenario"]["builtin"] = *a.scenario;
  const RunConfig cfg = resolve(a.common, extra);
  if (!a.no_aitsmc && a.policy.empty()) throw UsageError("compare needs --policy or --no-aitsmc");

  std::vector<ControllerKind> kinds{ControllerKind::kSmc, ControllerKind::kItsmc};
  std::optional<LoadedPolicy> pol;
  if (!a.no_aitsmc) {
    pol = read_policy(a.policy);
    kinds.push_back(ControllerKind::kAitsmc);
  }
  const int n = static_cast<int>(kinds.size());
  std::vector<TrajectoryLog> logs(kinds.size());
#pragma omp parallel for schedule(static, 1)
  for (int i = 0; i < n; ++i) {
    ControllerConfig c = cfg.controller;
    c.kind = kinds[i];
    std::optional<PolicyGains> g;
    if (c.kind == ControllerKind::kAitsmc) g.emplace(pol->params);
    logs[i] = run_scenario(cfg.model, c, cfg.scenario, g ? &*g : nullptr, reward_config(cfg));
  }

  const fs::path dir = prepare_dir(cfg);
  ojson m = manifest("compare", cfg);
  if (pol) m["policy"] = {{"path", pol->path}, {"fnv1a", pol->hash}, {"iteration", pol->iteration}};
  std::vector<MetricsReport> reports;
  for (int i = 0; i < n; ++i) {
    std::string name = to_string(kinds[i]);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    if (!logs[i].ok()) {
      write_manifest(dir, m);
      throw std::runtime_error(name + " simulation fault: " + logs[i].fault);
    }
    std::ostringstream csv;
    write_trajectory_csv(csv, logs[i]);
    write_atomic(dir / ("trajectory_" + lower(name) + ".csv"), csv.str());
    reports.push_back(compute_metrics(logs[i], name, scenario_label(cfg)));
  }
  write_atomic(dir / "comparison.md", comparison_markdown(reports));
  write_atomic(dir / "comparison.csv", comparison_csv(reports));

  ojson checks = ojson::array();
  bool ok = true;
  auto check = [&](const std::string& what, double num, double den, double limit) {
    const double ratio = num / den;
    const bool pass = ratio <= limit;
    ok = ok && pass;
    checks.push_back({{"check", what}, {"ratio", ratio}, {"limit", limit}, {"pass", pass}});
  };
  check("ACM(ITSMC) / ACM(SMC)", reports[1].acm, reports[0].acm, kChatterRatio);
  check("CE(ITSMC) / CE(SMC)", reports[1].ce, reports[0].ce, kChatterRatio);
  if (reports.size() == 3) {
    check("ISE(AITSMC) / ISE(ITSMC)", reports[2].ise, reports[1].ise, kTrackingRatio);
    check("ITSE(AITSMC) / ITSE(ITSMC)", reports[2].itse, reports[1].itse, kTrackingRatio);
  }
  m["threshold_checks"] = checks;
  write_manifest(dir, m);

  std::cout << comparison_markdown(reports);
  if (!ok) {
    std::string report = "threshold violations:\n";
    for (const auto& c : checks)
      if (!c["pass"].get<bool>())
        report += "  " + c["check"].get<std::string>() + " = " + c["ratio"].dump() + " > " + c["limit"].dump() + "\n";
    throw ThresholdViolation(report);
  }
  return kOk;
}

// ---- metrics --------------------------------------------------------------

struct MetricsArgs {
  std::string trajectory, out, controller = "unknown", scenario = "unknown";
};

int cmd_metrics(const MetricsArgs& a) {
  std::istringstream is(read_file(a.trajectory));
  const TrajectoryLog log = read_trajectory_csv(is);
  const std::string text = metrics_json(compute_metrics(log, a.controller, a.scenario));
  if (!a.out.empty()) write_atomic(a.out, text);
  std::cout << text;
  return kOk;
}

// ---- gradcheck / dyncheck ---------------------------------------------------

struct GradcheckArgs {
  Common common;
  std::uint64_t seed = 42;
  int parameters = 200;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const RunConfig cfg = resolve(a.common, nlohmann::json::object());
  GradCheckOptions opt;
  opt.parameters = a.parameters;
  const GradCheckReport r = gradient_check(cfg.arch, a.seed, opt);
  const fs::path dir = prepare_dir(cfg);
  write_atomic(dir / "gradcheck.json", r.to_json());
  std::cout << "checked " << r.checked << " parameters, " << r.failed << " failed, max relative error " << r.max_rel
            << "\n";
  if (!r.passed()) throw ThresholdViolation("gradient check failed for " + std::to_string(r.failed) + " entries");
  return kOk;
}

struct DyncheckArgs {
  Common common;
  int jacobian_samples = 100;
  int dynamics_samples = 1000;
};

int cmd_dyncheck(const DyncheckArgs& a) {
  const RunConfig cfg = resolve(a.common, nlohmann::json::object());
  const ScenarioSpec s1 = builtin_scenario(1);
  // the scenario-1 initial q is always one of the Jacobian samples
  const JacobianCheck j = check_jacobian(cfg.model, a.jacobian_samples - 1, cfg.seed);
  const DynamicsCheck d = check_dynamics(cfg.model, a.dynamics_samples, cfg.seed + 1);
  const EnergyCheck e = check_energy(cfg.model, s1.q0, s1.qd0, 5.0, 1e-3);
  const OrderCheck o = check_rk4_order();
  const fs::path dir = prepare_dir(cfg);
  const std::string text = dyncheck_json(j, d, e, o);
  write_atomic(dir / "dyncheck.json", text);
  std::cout << text;
  const bool ok = j.max_abs_error < 1e-6 && d.symmetric && d.min_eigenvalue > 0.0 && d.max_skew_residual < 1e-9 &&
                  d.max_gravity_error < 1e-8 && e.max_relative_drift < 1e-6 && o.ratio >= 14.0 && o.ratio <= 18.0;
  if (!ok) throw ThresholdViolation("dynamics verification failed");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Exoskeleton sliding-mode control: simulation, training and verification"};
  app.name("exo");
  app.require_subcommand(1);
  app.set_version_flag("--version", EXO_VERSION);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run one controller on one scenario");
  sim.common.add(s);
  s->add_option("--controller", sim.controller, "smc, itsmc or aitsmc")
      ->check(CLI::IsMember({"smc", "itsmc", "aitsmc"}));
  s->add_option("--scenario", sim.scenario, "built-in scenario id")->check(CLI::IsMember({1, 2}));
  s->add_option("--policy", sim.policy, "trained policy JSON (aitsmc)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the adaptive gain policy with PPO");
  tr.common.add(t);
  t->add_option("--iterations", tr.iterations, "training iterations")->check(CLI::NonNegativeNumber);
  t->add_option("--resume", tr.resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "run SMC, ITSMC and AITSMC and tabulate the indices");
  cmp.common.add(c);
  c->add_option("--scenario", cmp.scenario, "built-in scenario id")->check(CLI::IsMember({1, 2}));
  c->add_option("--policy", cmp.policy, "trained policy JSON");
  c->add_flag("--no-aitsmc", cmp.no_aitsmc, "only SMC and ITSMC");

  MetricsArgs met;
  auto* me = app.add_subcommand("metrics", "performance indices of a trajectory CSV");
  me->add_option("trajectory", met.trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);
  me->add_option("--out", met.out, "also write the JSON here");
  me->add_option("--controller", met.controller, "label stored in the report");
  me->add_option("--scenario", met.scenario, "label stored in the report");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "backward pass against finite differences");
  gc.common.add(g);
  g->add_option("--check-seed", gc.seed, "seed of the random network instance");
  g->add_option("--parameters", gc.parameters, "parameters to sample")->check(CLI::PositiveNumber);

  DyncheckArgs dc;
  auto* d = app.add_subcommand("dyncheck", "kinematics, dynamics and integrator verification");
  dc.common.add(d);
  d->add_option("--jacobian-samples", dc.jacobian_samples)->check(CLI::PositiveNumber);
  d->add_option("--dynamics-samples", dc.dynamics_samples)->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*t) return cmd_train(tr);
    if (*c) return cmd_compare(cmp);
    if (*me) return cmd_metrics(met);
    if (*g) return cmd_gradcheck(gc);
    if (*d) return cmd_dyncheck(dc);
  } catch (const UsageError& e) {
    std::cerr << "exo: " << e.what() << "\n";
    return kUsageError;
  } catch (const InvalidArgument& e) {
    std::cerr << "exo: " << e.what() << "\n";
    return kUsageError;
  } catch (const ThresholdViolation& e) {
    std::cerr << "exo: " << e.what();
    return kThresholdViolation;
  } catch (const std::exception& e) {
    std::cerr << "exo: " << e.what() << "\n";
    return kRuntimeFault;
  }
  return kUsageError;
}

}  // namespace exo::cli
