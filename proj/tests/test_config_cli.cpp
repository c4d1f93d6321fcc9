#include "cli.hpp"
#include "exo/config.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace exo;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("exo_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

int exo_run(std::vector<std::string> args) { return cli::run(args); }

// tiny training budget
const std::vector<std::string> kSmallTrain{"--set", "ppo.horizon=60", "ppo.minibatch=30", "ppo.epochs=1",
                                           "scenario.duration=0.1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("schema rejects unknown keys and bad types") {
  const json& schema = config_schema();
  CHECK_NOTHROW(validate_against_schema(json::parse(R"({"seed": 3, "ppo": {"iterations": 2}})"), schema));
  CHECK_THROWS_AS(validate_against_schema(json::parse(R"({"sed": 3})"), schema), InvalidArgument);
  CHECK_THROWS_AS(validate_against_schema(json::parse(R"({"ppo": {"iteratons": 2}})"), schema), InvalidArgument);
  CHECK_THROWS_AS(validate_against_schema(json::parse(R"({"seed": "three"})"), schema), InvalidArgument);
  CHECK_THROWS_AS(validate_against_schema(json::parse(R"({"controller": {"kind": "pid"}})"), schema), InvalidArgument);
  CHECK_THROWS_AS(validate_against_schema(json::parse(R"({"model": {"masses_kg": [1, 2]}})"), schema),
                  InvalidArgument);
  try {
    validate_against_schema(json::parse(R"({"ppo": {"bogus": 1}})"), schema);
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("ppo.bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config(json::parse(R"({"controller": {"gamma": 2.5}})")), InvalidArgument);
}

TEST_CASE("config round trip and shipped defaults") {
  const RunConfig d;
  const json doc = json::parse(config_to_json(d).dump());
  CHECK_NOTHROW(validate_against_schema(doc, config_schema()));
  const RunConfig back = apply_config(doc);
  CHECK(config_to_json(back).dump() == config_to_json(d).dump());

  const RunConfig shipped = load_config_file(EXO_SOURCE_DIR "/configs/default.json");
  CHECK(config_to_json(shipped).dump() == config_to_json(d).dump());

  // a custom scenario needs all of q0, qd0 and disturbance
  CHECK_THROWS_AS(apply_config(json::parse(R"({"scenario": {"builtin": 0}})")), InvalidArgument);
  const RunConfig s2 = apply_config(json::parse(R"({"scenario": {"builtin": 2}, "seed": 9})"));
  CHECK(s2.builtin_scenario == 2);
  CHECK(s2.ppo.seed == 9);
}

TEST_CASE("cli: simulate writes the trajectory and is reproducible") {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  REQUIRE(exo_run({"simulate", "--controller", "itsmc", "--scenario", "1", "-o", a.string()}) == cli::kOk);
  REQUIRE(exo_run({"simulate", "--controller", "itsmc", "--scenario", "1", "-o", b.string()}) == cli::kOk);
  CHECK(line_count(a / "trajectory.csv") == 10002);
  CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
  json ma = json::parse(slurp(a / "run-manifest.json")), mb = json::parse(slurp(b / "run-manifest.json"));
  ma["config"].erase("output_dir");
  mb["config"].erase("output_dir");
  CHECK(ma == mb);
  const json m = json::parse(slurp(a / "metrics.json"));
  CHECK(m.at("ISE").get<double>() > 0.0);

  CHECK(exo_run({"simulate", "--controller", "aitsmc", "-o", a.string()}) == cli::kUsageError);
  CHECK(exo_run({"simulate", "--controller", "pid", "-o", a.string()}) == cli::kUsageError);
  CHECK(exo_run({"simulate", "--set", "nope.key=1", "-o", a.string()}) == cli::kUsageError);
  CHECK(exo_run({"simulate", "--set", "scenario.duration=0.5", "-o", a.string()}) == cli::kOk);
  CHECK(line_count(a / "trajectory.csv") == 502);

  // metrics on the written file reproduces metrics.json
  const fs::path out = a / "again.json";
  REQUIRE(exo_run({"metrics", (a / "trajectory.csv").string(), "--out", out.string()}) == cli::kOk);
  CHECK(json::parse(slurp(out)).at("ISE") == json::parse(slurp(a / "metrics.json")).at("ISE"));
}

TEST_CASE("cli: train zero budget, determinism and resume") {
  const fs::path z = scratch("train_zero");
  REQUIRE(exo_run(with({"train", "--iterations", "0", "--seed", "4", "-o", z.string()}, kSmallTrain)) == cli::kOk);
  std::ifstream zf(z / "policy_final.json");
  const PolicyParams init = load_policy(zf);
  const PolicyParams expected = init_policy({}, 4, ControllerConfig{}.gains, PpoConfig{}.init_log_std);
  CHECK((init.theta.array() == expected.theta.array()).all());

  const fs::path a = scratch("train_a"), b = scratch("train_b"), r = scratch("train_r");
  REQUIRE(exo_run(with({"train", "--iterations", "3", "--seed", "4", "-o", a.string()}, kSmallTrain)) == cli::kOk);
  REQUIRE(exo_run(with({"train", "--iterations", "3", "--seed", "4", "-o", b.string()}, kSmallTrain)) == cli::kOk);
  CHECK(line_count(a / "train_log.csv") == 4);
  CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
  CHECK(slurp(a / "policy_final.json") == slurp(b / "policy_final.json"));

  REQUIRE(exo_run(with({"train", "--iterations", "1", "--seed", "4", "-o", r.string()}, kSmallTrain)) == cli::kOk);
  REQUIRE(exo_run(with({"train", "--iterations", "3", "--seed", "4", "--resume", (r / "policy_iter_0.json").string(),
                        "-o", r.string()},
                       kSmallTrain)) == cli::kOk);
  CHECK(slurp(r / "train_log.csv") == slurp(a / "train_log.csv"));
  CHECK(slurp(r / "policy_final.json") == slurp(a / "policy_final.json"));
}

TEST_CASE("cli: compare without the adaptive controller") {
  const fs::path c = scratch("compare");
  const int code = exo_run({"compare", "--scenario", "1", "--no-aitsmc", "-o", c.string()});
  CHECK((code == cli::kOk || code == cli::kThresholdViolation));
  CHECK(line_count(c / "comparison.csv") == 3);
  CHECK(fs::exists(c / "trajectory_smc.csv"));
  CHECK(fs::exists(c / "trajectory_itsmc.csv"));
  CHECK_FALSE(fs::exists(c / "trajectory_aitsmc.csv"));
  const json m = json::parse(slurp(c / "run-manifest.json"));
  CHECK(m.contains("threshold_checks"));
}
