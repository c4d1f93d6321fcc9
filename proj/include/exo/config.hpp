#pragma once

// Run configuration: defaults < JSON file < command-line overrides. Every
// document is checked against the shipped schema (configs/config.schema.json)
// before it is applied; unknown keys are rejected.

#include "exo/policy.hpp"
#include "exo/ppo.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace exo {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  RobotModel model{};
  ControllerConfig controller{};
  int builtin_scenario = 1;  // 0 when the scenario is given explicitly
  ScenarioSpec scenario = exo::builtin_scenario(1);
  PolicyArch arch{};
  PpoConfig ppo{};
  int checkpoint_every = 1;
  std::vector<int> train_scenarios{1, 2};

  void validate() const;
};

const nlohmann::json& config_schema();

// Throws InvalidArgument naming the offending JSON path.
void validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema);

// Applies a (partial) document on top of base.
RunConfig apply_config(const nlohmann::json& doc, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

// Fully resolved document; apply_config(config_to_json(c)) reproduces c.
nlohmann::ordered_json config_to_json(const RunConfig& c);

}  // namespace exo
