#pragma once

// PPO training of the gain policy on the closed-loop exoskeleton.

#include "exo/grad.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace exo {

struct PpoConfig {
  LossConfig loss{};
  double lambda_pen = 0.5;  // V2 weight in the penalty and the reward
  double discount = 0.99;
  double gae_lambda = 0.95;
  int epochs = 10;
  int minibatch = 64;
  double step_size = 3e-4;
  int horizon = 2048;  // transitions per iteration (rounded up to whole episodes)
  int iterations = 150;
  double max_grad_norm = 0.5;
  double w_chatter = 1e-3;     // control-increment weight in the reward
  double reward_scale = 0.01;  // applied to the per-decision reward before advantage estimation
  double init_log_std = -0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Transition {
  SequenceSample seq;
  Eigen::Vector3d action = Eigen::Vector3d::Zero();
  double log_prob_old = 0.0;
  double reward = 0.0;
  double value_old = 0.0;
  Vec5 s_vec = Vec5::Zero();
  bool done = false;
};

class RolloutBuffer {
 public:
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  bool finalized() const { return finalized_; }
  const std::vector<Transition>& transitions() const { return items_; }
  const std::vector<double>& advantages() const { return adv_; }      // normalized
  const std::vector<double>& raw_advantages() const { return raw_; }  // before normalization
  const std::vector<double>& returns() const { return ret_; }

  // GAE over the stored values; bootstrap is V of the state after the last
  // transition when it is not terminal. Can be called once.
  void compute_advantages(double discount, double gae_lambda, double bootstrap = 0.0);

  // Training samples with the penalty V1 + lambda_pen sum|s| attached.
  std::vector<PpoSample> samples(double lambda_pen) const;

 private:
  std::vector<Transition> items_;
  std::vector<double> adv_, raw_, ret_;
  bool finalized_ = false;
};

// The clipped surrogate minus the Lyapunov penalty, plus entropy bonus and
// value loss, negated. Minibatch means.
LossParts surrogate_objective(std::span<const PpoSample> batch, const PolicyParams& p, const PpoConfig& cfg);

struct AdamState {
  VecX m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState adam_init(Eigen::Index n);
void adam_step(VecX& theta, const VecX& grad, AdamState& st, double step_size);

struct TrainStats {
  int iteration = 0;
  int episodes = 0;
  int transitions = 0;
  double mean_reward = 0.0;          // per decision, before reward scaling
  double mean_episode_reward = 0.0;  // sum over an episode, before reward scaling
  double loss = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double penalty = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double mean_k1 = 0.0, mean_k2 = 0.0, mean_k3 = 0.0;
};

// Epochs of shuffled minibatch Adam steps with global gradient-norm clipping.
TrainStats update(PolicyParams& p, const RolloutBuffer& buf, const PpoConfig& cfg, AdamState& adam,
                  std::mt19937_64& rng, Exec exec = Exec::kParallel);

// Initial state perturbed by U(-0.2, 0.2), amplitudes scaled by U(0.5, 1.5),
// phases drawn from U(0, 2 pi).
ScenarioSpec randomize_scenario(const ScenarioSpec& base, std::mt19937_64& rng);

struct EpisodeResult {
  std::vector<Transition> transitions;
  double total_reward = 0.0;  // unscaled
  Eigen::Vector3d gain_sum = Eigen::Vector3d::Zero();
};

// One stochastic episode of the adaptive controller. The policy decides every
// controller.policy_period integration steps; the decision's reward is the
// mean per-step reward over the steps it governs.
EpisodeResult collect_episode(const RobotModel& model, const ControllerConfig& controller,
                              const ScenarioSpec& scenario, const PolicyParams& p, const PpoConfig& cfg,
                              std::uint64_t episode_seed);

std::uint64_t episode_seed(std::uint64_t seed, int iteration, int episode);

struct TrainResult {
  PolicyParams params;
  std::vector<TrainStats> stats;
};

using IterationHook = std::function<void(const PolicyParams&, const TrainStats&, const AdamState&)>;

// Runs iterations first_iteration .. cfg.iterations - 1. Episodes of one
// iteration run in parallel and are merged in episode order. A simulation
// fault throws TrainingFault naming the episode seed.
TrainResult train(const RobotModel& model, const ControllerConfig& controller,
                  const std::vector<ScenarioSpec>& scenarios, PolicyParams init, const PpoConfig& cfg,
                  const IterationHook& hook = {}, int first_iteration = 0, Exec exec = Exec::kParallel,
                  const AdamState* resume = nullptr);

// Policy file plus the optimizer state, so a resumed run continues exactly.
struct Checkpoint {
  PolicyParams params;
  int iteration = -1;
  std::optional<AdamState> adam;
};
void save_checkpoint(std::ostream& os, const PolicyParams& p, int iteration, const AdamState& adam);
Checkpoint load_checkpoint(std::istream& is);

std::string train_log_header();
std::string train_log_row(const TrainStats& s);

}  // namespace exo
