#include "exo/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace exo {

extern const char* const kConfigSchemaText;

const nlohmann::json& config_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(kConfigSchemaText);
  return schema;
}

namespace {

using nlohmann::json;

bool is_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && d == std::floor(d);
    }
    return false;
  }
  if (t == "null") return v.is_null();
  return false;
}

void check(const json& v, const json& s, const std::string& path) {
  auto fail = [&](const std::string& what) {
    throw InvalidArgument("config " + (path.empty() ? std::string("(root)") : path) + ": " + what);
  };
  if (s.contains("type")) {
    const json& t = s["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = is_type(v, t.get<std::string>());
    } else {
      for (const auto& x : t) ok = ok || is_type(v, x.get<std::string>());
    }
    if (!ok) fail("expected type " + t.dump());
  }
  if (s.contains("enum")) {
    bool ok = false;
    for (const auto& e : s["enum"]) ok = ok || e == v;
    if (!ok) fail("value " + v.dump() + " not in " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double d = v.get<double>();
    if (s.contains("minimum") && d < s["minimum"].get<double>()) fail("must be >= " + s["minimum"].dump());
    if (s.contains("maximum") && d > s["maximum"].get<double>()) fail("must be <= " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && d <= s["exclusiveMinimum"].get<double>())
      fail("must be > " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && d >= s["exclusiveMaximum"].get<double>())
      fail("must be < " + s["exclusiveMaximum"].dump());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      fail("needs at least " + s["minItems"].dump() + " items");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
      fail("allows at most " + s["maxItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "[" + std::to_string(i) + "]");
  }
  if (v.is_object()) {
    const json empty = json::object();
    const json& props = s.contains("properties") ? s["properties"] : empty;
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) fail("missing required key '" + r.get<std::string>() + "'");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string sub = path.empty() ? it.key() : path + "." + it.key();
      if (props.contains(it.key())) {
        check(it.value(), props[it.key()], sub);
      } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
        throw InvalidArgument("config: unknown key '" + sub + "'");
      }
    }
  }
}

template <std::size_t N>
std::array<double, N> arr(const json& j) {
  std::array<double, N> a{};
  for (std::size_t i = 0; i < N; ++i) a[i] = j[i].get<double>();
  return a;
}

Vec5 vec5(const json& j) {
  Vec5 v;
  for (int i = 0; i < kJoints; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

std::vector<double> to_vec(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

template <class T>
void set(const json& o, const char* key, T& dst) {
  if (o.contains(key)) dst = o[key].get<T>();
}

}  // namespace

void validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema) { check(doc, schema, ""); }

void RunConfig::validate() const {
  model.validate();
  controller.validate();
  scenario.validate(model);
  arch.validate();
  ppo.validate();
  if (checkpoint_every < 1) throw InvalidArgument("checkpoint_every must be >= 1");
  if (train_scenarios.empty()) throw InvalidArgument("at least one training scenario is needed");
}

RunConfig apply_config(const nlohmann::json& doc, RunConfig c) {
  validate_against_schema(doc, config_schema());
  if (doc.contains("seed")) {
    c.seed = doc["seed"].get<std::uint64_t>();
    c.ppo.seed = c.seed;
    c.scenario.seed = c.seed;
  }
  set(doc, "output_dir", c.output_dir);

  if (doc.contains("model")) {
    const json& m = doc["model"];
    const bool geometry_changed =
        m.contains("base_offset_mm") || m.contains("scap_m") || m.contains("link_m") || m.contains("fullarm_m");
    set(m, "base_offset_mm", c.model.geometry.base_offset_mm);
    set(m, "scap_m", c.model.geometry.scap_m);
    set(m, "link_m", c.model.geometry.link_m);
    set(m, "fullarm_m", c.model.geometry.fullarm_m);
    if (geometry_changed) {
      // centre-of-mass and inertia defaults follow the geometry unless given
      const InertialParams d = InertialParams::defaults_for(c.model.geometry);
      if (!m.contains("com_m")) c.model.inertial.com_m = d.com_m;
      if (!m.contains("inertia_kgm2")) c.model.inertial.inertia_kgm2 = d.inertia_kgm2;
    }
    if (m.contains("masses_kg")) c.model.inertial.masses_kg = arr<kJoints>(m["masses_kg"]);
    if (m.contains("com_m")) c.model.inertial.com_m = arr<kJoints>(m["com_m"]);
    if (m.contains("inertia_kgm2")) c.model.inertial.inertia_kgm2 = arr<kJoints>(m["inertia_kgm2"]);
    set(m, "gravity_mps2", c.model.inertial.gravity_mps2);
    set(m, "state_cap", c.model.state_cap);
    set(m, "force_bound", c.model.force_bound);
  }

  if (doc.contains("controller")) {
    const json& k = doc["controller"];
    if (k.contains("kind")) c.controller.kind = controller_kind_from_string(k["kind"].get<std::string>());
    set(k, "alpha1", c.controller.law.surface.alpha1);
    set(k, "alpha2", c.controller.law.surface.alpha2);
    set(k, "gamma", c.controller.law.surface.gamma);
    set(k, "k1", c.controller.gains.k1);
    set(k, "k2", c.controller.gains.k2);
    set(k, "k3", c.controller.gains.k3);
    set(k, "literal_eq21", c.controller.law.literal_eq21);
    set(k, "smc_k", c.controller.smc_k);
    set(k, "policy_period", c.controller.policy_period);
    if (k.contains("acceleration_estimate"))
      c.controller.law.accel = k["acceleration_estimate"] == "previous_step" ? AccelerationEstimate::kPreviousStep
                                                                            : AccelerationEstimate::kZero;
  }

  if (doc.contains("scenario")) {
    const json& s = doc["scenario"];
    const bool custom = s.contains("q0") || s.contains("qd0") || s.contains("disturbance");
    if (s.contains("builtin")) {
      if (custom) throw InvalidArgument("config scenario: 'builtin' cannot be combined with q0, qd0 or disturbance");
      const double duration = c.scenario.duration, dt = c.scenario.dt;
      c.builtin_scenario = s["builtin"].get<int>();
      c.scenario = builtin_scenario(c.builtin_scenario);
      c.scenario.duration = duration;
      c.scenario.dt = dt;
      c.scenario.seed = c.seed;
    } else if (custom) {
      if (!s.contains("q0") || !s.contains("qd0") || !s.contains("disturbance"))
        throw InvalidArgument("config scenario: a custom scenario needs q0, qd0 and disturbance");
      c.builtin_scenario = 0;
      c.scenario.name = "custom";
      c.scenario.q0 = vec5(s["q0"]);
      c.scenario.qd0 = vec5(s["qd0"]);
      for (std::size_t i = 0; i < 3; ++i) {
        const json& a = s["disturbance"][i];
        AxisDisturbance& d = c.scenario.disturbance.axes[i];
        d = AxisDisturbance{};
        d.amplitude = a["amplitude"].get<double>();
        d.waveform = a["waveform"] == "sin" ? Waveform::kSin : Waveform::kCos;
        d.onset = a["onset"].get<double>();
        set(a, "frequency", d.frequency);
        set(a, "phase", d.phase);
      }
    }
    set(s, "name", c.scenario.name);
    set(s, "duration", c.scenario.duration);
    set(s, "dt", c.scenario.dt);
  }

  if (doc.contains("policy")) {
    const json& p = doc["policy"];
    set(p, "hidden", c.arch.hidden);
    set(p, "window", c.arch.window);
    set(p, "k_max", c.arch.k_max);
  }

  if (doc.contains("ppo")) {
    const json& p = doc["ppo"];
    set(p, "clip_eps", c.ppo.loss.clip_eps);
    set(p, "value_clip", c.ppo.loss.value_clip);
    set(p, "beta", c.ppo.loss.beta);
    set(p, "entropy_coef", c.ppo.loss.entropy_coef);
    set(p, "value_coef", c.ppo.loss.value_coef);
    set(p, "lambda_pen", c.ppo.lambda_pen);
    set(p, "discount", c.ppo.discount);
    set(p, "gae_lambda", c.ppo.gae_lambda);
    set(p, "epochs", c.ppo.epochs);
    set(p, "minibatch", c.ppo.minibatch);
    set(p, "step_size", c.ppo.step_size);
    set(p, "horizon", c.ppo.horizon);
    set(p, "iterations", c.ppo.iterations);
    set(p, "max_grad_norm", c.ppo.max_grad_norm);
    set(p, "w_chatter", c.ppo.w_chatter);
    set(p, "reward_scale", c.ppo.reward_scale);
    set(p, "init_log_std", c.ppo.init_log_std);
    set(p, "checkpoint_every", c.checkpoint_every);
    if (p.contains("scenarios")) c.train_scenarios = p["scenarios"].get<std::vector<int>>();
  }
  c.validate();
  return c;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw InvalidArgument("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return apply_config(doc, std::move(base));
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  const auto& g = c.model.geometry;
  const auto& in = c.model.inertial;
  j["model"] = {{"base_offset_mm", g.base_offset_mm},
                {"scap_m", g.scap_m},
                {"link_m", g.link_m},
                {"fullarm_m", g.fullarm_m},
                {"masses_kg", in.masses_kg},
                {"com_m", in.com_m},
                {"inertia_kgm2", in.inertia_kgm2},
                {"gravity_mps2", in.gravity_mps2},
                {"state_cap", c.model.state_cap},
                {"force_bound", c.model.force_bound}};
  const auto& k = c.controller;
  j["controller"] = {{"kind", to_string(k.kind)},
                     {"alpha1", k.law.surface.alpha1},
                     {"alpha2", k.law.surface.alpha2},
                     {"gamma", k.law.surface.gamma},
                     {"k1", k.gains.k1},
                     {"k2", k.gains.k2},
                     {"k3", k.gains.k3},
                     {"literal_eq21", k.law.literal_eq21},
                     {"smc_k", k.smc_k},
                     {"policy_period", k.policy_period},
                     {"acceleration_estimate",
                      k.law.accel == AccelerationEstimate::kPreviousStep ? "previous_step" : "zero"}};
  nlohmann::ordered_json s;
  if (c.builtin_scenario != 0) {
    s["builtin"] = c.builtin_scenario;
  } else {
    s["name"] = c.scenario.name;
    s["q0"] = to_vec(c.scenario.q0);
    s["qd0"] = to_vec(c.scenario.qd0);
    auto& d = s["disturbance"] = nlohmann::ordered_json::array();
    for (const auto& a : c.scenario.disturbance.axes)
      d.push_back({{"amplitude", a.amplitude},
                   {"waveform", a.waveform == Waveform::kSin ? "sin" : "cos"},
                   {"onset", a.onset},
                   {"frequency", a.frequency},
                   {"phase", a.phase}});
  }
  s["duration"] = c.scenario.duration;
  s["dt"] = c.scenario.dt;
  j["scenario"] = s;
  j["policy"] = {{"hidden", c.arch.hidden}, {"window", c.arch.window}, {"k_max", c.arch.k_max}};
  const auto& p = c.ppo;
  j["ppo"] = {{"clip_eps", p.loss.clip_eps},
              {"value_clip", p.loss.value_clip},
              {"beta", p.loss.beta},
              {"lambda_pen", p.lambda_pen},
              {"discount", p.discount},
              {"gae_lambda", p.gae_lambda},
              {"epochs", p.epochs},
              {"minibatch", p.minibatch},
              {"step_size", p.step_size},
              {"horizon", p.horizon},
              {"iterations", p.iterations},
              {"entropy_coef", p.loss.entropy_coef},
              {"value_coef", p.loss.value_coef},
              {"max_grad_norm", p.max_grad_norm},
              {"w_chatter", p.w_chatter},
              {"reward_scale", p.reward_scale},
              {"init_log_std", p.init_log_std},
              {"checkpoint_every", c.checkpoint_every},
              {"scenarios", c.train_scenarios}};
  return j;
}

}  // namespace exo
