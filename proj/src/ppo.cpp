#include "exo/ppo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>
#include <numeric>
#include <sstream>

namespace exo {

void PpoConfig::validate() const {
  if (!(loss.clip_eps >= 0.1 && loss.clip_eps <= 0.5)) throw InvalidArgument("clip_eps must lie in [0.1, 0.5]");
  if (!(loss.value_clip > 0.0)) throw InvalidArgument("value_clip must be > 0");
  if (!(loss.beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
  if (!(loss.entropy_coef >= 0.0) || !(loss.value_coef >= 0.0))
    throw InvalidArgument("entropy and value coefficients must be >= 0");
  if (!(lambda_pen >= 0.0)) throw InvalidArgument("lambda_pen must be >= 0");
  if (!(discount > 0.0 && discount <= 1.0)) throw InvalidArgument("discount must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InvalidArgument("gae_lambda must lie in [0, 1]");
  if (epochs < 1 || minibatch < 1 || horizon < 1) throw InvalidArgument("epochs, minibatch and horizon must be >= 1");
  if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (!(step_size >= 0.0)) throw InvalidArgument("step_size must be >= 0");
  if (!(max_grad_norm > 0.0)) throw InvalidArgument("max_grad_norm must be > 0");
  if (!(reward_scale > 0.0)) throw InvalidArgument("reward_scale must be > 0");
  if (!(w_chatter >= 0.0)) throw InvalidArgument("w_chatter must be >= 0");
  if (!(init_log_std >= kLogStdMin && init_log_std <= kLogStdMax))
    throw InvalidArgument("init_log_std must lie in the log-std clamp range");
}

void RolloutBuffer::push(Transition t) {
  if (finalized_) throw InvalidArgument("rollout buffer already finalized");
  items_.push_back(std::move(t));
}

void RolloutBuffer::compute_advantages(double discount, double gae_lambda, double bootstrap) {
  if (finalized_) throw InvalidArgument("advantages already computed");
  if (items_.empty()) throw InvalidArgument("empty rollout buffer");
  const std::size_t n = items_.size();
  raw_.assign(n, 0.0);
  ret_.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Transition& t = items_[k];
    const double next_v = t.done ? 0.0 : (k + 1 < n ? items_[k + 1].value_old : bootstrap);
    const double carry = t.done ? 0.0 : next_adv;
    const double delta = t.reward + discount * next_v - t.value_old;
    raw_[k] = delta + discount * gae_lambda * carry;
    ret_[k] = raw_[k] + t.value_old;
    next_adv = raw_[k];
  }
  adv_ = raw_;
  if (n > 1) {
    const double mean = std::accumulate(raw_.begin(), raw_.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double a : raw_) var += (a - mean) * (a - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (double& a : adv_) a = sd > 0.0 ? (a - mean) / sd : a - mean;
  }
  finalized_ = true;
}

std::vector<PpoSample> RolloutBuffer::samples(double lambda_pen) const {
  if (!finalized_) throw InvalidArgument("rollout buffer not finalized");
  std::vector<PpoSample> out(items_.size());
  for (std::size_t k = 0; k < items_.size(); ++k) {
    const Transition& t = items_[k];
    out[k].seq = t.seq;
    out[k].action = t.action;
    out[k].log_prob_old = t.log_prob_old;
    out[k].advantage = adv_[k];
    out[k].value_old = t.value_old;
    out[k].ret = ret_[k];
    out[k].penalty = lyapunov_penalty(t.s_vec, lambda_pen);
  }
  return out;
}

LossParts surrogate_objective(std::span<const PpoSample> batch, const PolicyParams& p, const PpoConfig& cfg) {
  return ppo_loss(p, batch, cfg.loss);
}

AdamState adam_init(Eigen::Index n) {
  AdamState s;
  s.m = VecX::Zero(n);
  s.v = VecX::Zero(n);
  return s;
}

void adam_step(VecX& theta, const VecX& grad, AdamState& st, double step_size) {
  if (grad.size() != theta.size() || st.m.size() != theta.size()) throw InvalidArgument("Adam size mismatch");
  ++st.t;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    theta[i] -= step_size * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
}

TrainStats update(PolicyParams& p, const RolloutBuffer& buf, const PpoConfig& cfg, AdamState& adam,
                  std::mt19937_64& rng, Exec exec) {
  const std::vector<PpoSample> all = buf.samples(cfg.lambda_pen);
  std::vector<std::size_t> order(all.size());
  std::vector<PpoSample> mb;
  TrainStats st;
  int batches = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      mb.clear();
      for (std::size_t k = start; k < end; ++k) mb.push_back(all[order[k]]);
      LossGrad lg = ppo_loss_grad(p, mb, cfg.loss, exec);
      const double norm = lg.grad.norm();
      if (norm > cfg.max_grad_norm) lg.grad *= cfg.max_grad_norm / norm;
      adam_step(p.theta, lg.grad, adam, cfg.step_size);
      st.loss += lg.parts.loss;
      st.surrogate += lg.parts.surrogate;
      st.value_loss += lg.parts.value_loss;
      st.entropy += lg.parts.entropy;
      st.penalty += lg.parts.penalty;
      st.clip_fraction += lg.parts.clip_fraction;
      st.approx_kl += lg.parts.approx_kl;
      ++batches;
    }
  }
  if (!p.theta.allFinite()) throw TrainingFault("parameters became non-finite");
  const double inv = 1.0 / static_cast<double>(std::max(batches, 1));
  st.loss *= inv;
  st.surrogate *= inv;
  st.value_loss *= inv;
  st.entropy *= inv;
  st.penalty *= inv;
  st.clip_fraction *= inv;
  st.approx_kl *= inv;
  return st;
}

ScenarioSpec randomize_scenario(const ScenarioSpec& base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-0.2, 0.2);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  ScenarioSpec s = base;
  for (int i = 0; i < kJoints; ++i) s.q0[i] += off(rng);
  for (int i = 0; i < kJoints; ++i) s.qd0[i] += off(rng);
  for (auto& a : s.disturbance.axes) {
    a.amplitude *= amp(rng);
    a.phase = phase(rng);
  }
  return s;
}

EpisodeResult collect_episode(const RobotModel& model, const ControllerConfig& controller,
                              const ScenarioSpec& scenario, const PolicyParams& p, const PpoConfig& cfg,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ClosedLoop loop(model, controller, scenario, RewardConfig{cfg.lambda_pen, cfg.w_chatter});
  const auto n = static_cast<std::size_t>(p.arch.window);
  PolicyState ps = initial_policy_state(p.arch);
  std::deque<VecX> win_obs;
  std::deque<std::pair<VecX, VecX>> win_before;  // (h, c) before each windowed observation
  EpisodeResult res;
  while (!loop.done()) {
    const VecX x = loop.observation();
    win_obs.push_back(x);
    win_before.emplace_back(ps.h, ps.c);
    if (win_obs.size() > n) {
      win_obs.pop_front();
      win_before.pop_front();
    }
    PolicyOutput out = policy_forward(x, ps, p);
    Transition tr;
    tr.action = sample_action(out.dist, rng);
    tr.log_prob_old = log_prob_entropy(out.dist, tr.action).log_prob;
    tr.value_old = out.value;
    tr.s_vec = loop.stage().s;
    tr.seq.obs.assign(win_obs.begin(), win_obs.end());
    tr.seq.h0 = win_before.front().first;
    tr.seq.c0 = win_before.front().second;
    const ReachingGains g = gains_from_preactivation(tr.action, p.arch.k_max);
    res.gain_sum += Eigen::Vector3d(g.k1, g.k2, g.k3);

    double rsum = 0.0;
    int steps = 0;
    for (int k = 0; k < controller.policy_period && !loop.done(); ++k) {
      rsum += loop.act(g).reward;
      ++steps;
    }
    const double r = rsum / steps;
    res.total_reward += r;
    tr.reward = cfg.reward_scale * r;
    tr.done = loop.done();
    res.transitions.push_back(std::move(tr));
    ps = std::move(out.state);
  }
  return res;
}

std::uint64_t episode_seed(std::uint64_t seed, int iteration, int episode) {
  // splitmix64 over the packed triple
  std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(iteration) * 1000003ull +
                                                    static_cast<std::uint64_t>(episode) + 1ull));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

TrainResult train(const RobotModel& model, const ControllerConfig& controller,
                  const std::vector<ScenarioSpec>& scenarios, PolicyParams init, const PpoConfig& cfg,
                  const IterationHook& hook, int first_iteration, Exec exec, const AdamState* resume) {
  cfg.validate();
  controller.validate();
  if (controller.kind != ControllerKind::kAitsmc) throw InvalidArgument("training needs the adaptive controller");
  if (scenarios.empty()) throw InvalidArgument("training needs at least one scenario");
  if (first_iteration < 0) throw InvalidArgument("first iteration must be >= 0");
  for (const auto& s : scenarios) s.validate(model);

  TrainResult out{std::move(init), {}};
  AdamState adam = adam_init(out.params.theta.size());
  if (resume) {
    if (resume->m.size() != out.params.theta.size() || resume->v.size() != out.params.theta.size())
      throw InvalidArgument("optimizer state does not match the policy size");
    adam = *resume;
  }

  for (int it = first_iteration; it < cfg.iterations; ++it) {
    // per-iteration stream so a resumed run shuffles like an uninterrupted one
    std::mt19937_64 shuffle_rng(episode_seed(cfg.seed, it, -1));
    std::vector<ScenarioSpec> eps;
    std::vector<std::uint64_t> seeds;
    for (int e = 0, collected = 0; collected < cfg.horizon; ++e) {
      const ScenarioSpec& base = scenarios[static_cast<std::size_t>(it + e) % scenarios.size()];
      seeds.push_back(episode_seed(cfg.seed, it, e));
      std::mt19937_64 r(seeds.back());
      eps.push_back(randomize_scenario(base, r));
      collected += static_cast<int>((eps.back().steps() + static_cast<std::size_t>(controller.policy_period)) /
                                    static_cast<std::size_t>(controller.policy_period));
    }
    const auto n_eps = static_cast<long>(eps.size());
    std::vector<EpisodeResult> results(eps.size());
    std::vector<std::string> errors(eps.size());
    auto run = [&](long e) {
      const auto k = static_cast<std::size_t>(e);
      try {
        // action noise draws from a stream separate from the randomization
        results[k] = collect_episode(model, controller, eps[k], out.params, cfg, seeds[k] ^ 0x5DEECE66Dull);
      } catch (const std::exception& ex) {
        errors[k] = ex.what();
      }
    };
#ifdef EXO_HAVE_OPENMP
    if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
      for (long e = 0; e < n_eps; ++e) run(e);
    } else {
      for (long e = 0; e < n_eps; ++e) run(e);
    }
#else
    for (long e = 0; e < n_eps; ++e) run(e);
#endif
    for (std::size_t k = 0; k < errors.size(); ++k)
      if (!errors[k].empty())
        throw TrainingFault("iteration " + std::to_string(it) + ", episode seed " + std::to_string(seeds[k]) +
                            ": " + errors[k]);

    RolloutBuffer buf;
    TrainStats st;
    Eigen::Vector3d gains = Eigen::Vector3d::Zero();
    double reward_sum = 0.0;
    for (auto& r : results) {
      st.mean_episode_reward += r.total_reward;
      gains += r.gain_sum;
      for (auto& t : r.transitions) {
        reward_sum += t.reward / cfg.reward_scale;
        buf.push(std::move(t));
      }
    }
    buf.compute_advantages(cfg.discount, cfg.gae_lambda);
    const TrainStats up = update(out.params, buf, cfg, adam, shuffle_rng, exec);
    st.loss = up.loss;
    st.surrogate = up.surrogate;
    st.value_loss = up.value_loss;
    st.entropy = up.entropy;
    st.penalty = up.penalty;
    st.clip_fraction = up.clip_fraction;
    st.approx_kl = up.approx_kl;
    st.iteration = it;
    st.episodes = static_cast<int>(results.size());
    st.transitions = static_cast<int>(buf.size());
    st.mean_reward = reward_sum / static_cast<double>(buf.size());
    st.mean_episode_reward /= static_cast<double>(results.size());
    gains /= static_cast<double>(buf.size());
    st.mean_k1 = gains[0];
    st.mean_k2 = gains[1];
    st.mean_k3 = gains[2];
    out.stats.push_back(st);
    if (hook) hook(out.params, st, adam);
  }
  return out;
}

void save_checkpoint(std::ostream& os, const PolicyParams& p, int iteration, const AdamState& adam) {
  std::ostringstream ss;
  save_policy(ss, p, iteration);
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(ss.str());
  j["optimizer"] = {{"t", adam.t},
                    {"m", std::vector<double>(adam.m.data(), adam.m.data() + adam.m.size())},
                    {"v", std::vector<double>(adam.v.data(), adam.v.data() + adam.v.size())}};
  os << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(std::istream& is) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  std::istringstream body(j.dump());
  c.params = load_policy(body, &c.iteration);
  if (j.contains("optimizer")) {
    try {
      const auto& o = j["optimizer"];
      AdamState a = adam_init(c.params.theta.size());
      a.t = o.at("t").get<long>();
      const auto m = o.at("m").get<std::vector<double>>();
      const auto v = o.at("v").get<std::vector<double>>();
      if (m.size() != static_cast<std::size_t>(a.m.size()) || v.size() != static_cast<std::size_t>(a.v.size()))
        throw InvalidArgument("checkpoint optimizer state has the wrong length");
      a.m = Eigen::Map<const VecX>(m.data(), a.m.size());
      a.v = Eigen::Map<const VecX>(v.data(), a.v.size());
      c.adam = a;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("malformed checkpoint optimizer state: ") + e.what());
    }
  }
  return c;
}

std::string train_log_header() {
  return "iteration,episodes,transitions,mean_reward,mean_episode_reward,loss,surrogate,value_loss,entropy,"
         "penalty,clip_fraction,approx_kl,mean_k1,mean_k2,mean_k3";
}

std::string train_log_row(const TrainStats& s) {
  std::string line = std::to_string(s.iteration) + "," + std::to_string(s.episodes) + "," +
                     std::to_string(s.transitions);
  char buf[32];
  for (double v : {s.mean_reward, s.mean_episode_reward, s.loss, s.surrogate, s.value_loss, s.entropy, s.penalty,
                   s.clip_fraction, s.approx_kl, s.mean_k1, s.mean_k2, s.mean_k3}) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    line += ',';
    line += buf;
  }
  return line;
}

}  // namespace exo
