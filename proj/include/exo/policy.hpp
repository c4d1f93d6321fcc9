#pragma once

// Gain policy: one LSTM layer, scalar-score attention over the last N hidden
// states, three gain heads and a critic head, all reading the attention
// context. The policy acts in pre-activation space; gains are obtained from a
// pre-activation a by k1 = softplus(a1), k2 = softplus(a2),
// k3 = 1 + softplus(a3), each capped at k_max.

#include "exo/sim.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace exo {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct PolicyArch {
  int obs_dim = kObsDim;
  int hidden = 32;
  int window = 8;
  double k_max = 50.0;

  void validate() const;
  bool operator==(const PolicyArch&) const = default;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Slice of the flat parameter array. Matrices are stored column-major.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

// Block order: lstm.W_{i,f,o,c}, lstm.U_{i,f,o,c}, lstm.b_{i,f,o,c}, attn.w_a,
// attn.b_a, heads.W, heads.b, critic.w, critic.b, policy.log_std.
std::vector<ParamBlock> parameter_layout(const PolicyArch& arch);
Eigen::Index parameter_count(const PolicyArch& arch);

struct PolicyParams {
  PolicyArch arch;
  VecX theta;

  explicit PolicyParams(const PolicyArch& a = {});
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::string_view name) const;

 private:
  std::vector<ParamBlock> blocks_;
};

// Read-only matrix views into a flat vector with the policy layout. Also
// used over gradient vectors.
template <class Scalar>
struct NetViewT {
  using M = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const MatX, MatX>>;
  using V = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const VecX, VecX>>;
  M W_i, W_f, W_o, W_c;
  M U_i, U_f, U_o, U_c;
  V b_i, b_f, b_o, b_c;
  V w_a;
  Scalar& b_a;
  M W_h;
  V b_h;
  V w_v;
  Scalar& b_v;
  V log_std;
};
using NetView = NetViewT<const double>;
using NetGradView = NetViewT<double>;

NetView view(const PolicyArch& arch, const VecX& theta);
NetGradView view(const PolicyArch& arch, VecX& theta);

// Uniform +-1/sqrt(fan_in) input and recurrent weights, forget bias +1, head
// biases at the inverse softplus of the given warm-start gains.
PolicyParams init_policy(const PolicyArch& arch, std::uint64_t seed, const ReachingGains& warm = {},
                         double log_std = -0.7);

struct PolicyState {
  VecX h;
  VecX c;
  std::vector<VecX> window;  // oldest first, at most arch.window entries
};

PolicyState initial_policy_state(const PolicyArch& arch);

// Intermediate values of one LSTM step, kept for backpropagation.
struct LstmCache {
  VecX i, f, o, g;  // gate activations and candidate cell
  VecX c, tc, h;    // new cell, tanh(cell), new hidden
};

LstmCache lstm_cell(const NetView& p, const VecX& x, const VecX& h_prev, const VecX& c_prev);

// Advances h, c and appends the new hidden state to the window.
PolicyState lstm_step(const VecX& obs, const PolicyState& st, const PolicyParams& p);

struct AttentionResult {
  VecX context;
  VecX weights;
  VecX scores;
};

AttentionResult attention_context(std::span<const VecX> window, const VecX& w_a, double b_a);
AttentionResult attention_context(std::span<const VecX> window, const PolicyParams& p);

double softplus(double x);
double softplus_inverse(double y);

ReachingGains gains_from_preactivation(const Eigen::Vector3d& a, double k_max);
ReachingGains gain_heads(const VecX& context, const PolicyParams& p);

struct GaussianPolicy {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_std = Eigen::Vector3d::Zero();  // already clamped
};

struct LogProbEntropy {
  double log_prob = 0.0;
  double entropy = 0.0;
};

LogProbEntropy log_prob_entropy(const GaussianPolicy& dist, const Eigen::Vector3d& action);
Eigen::Vector3d sample_action(const GaussianPolicy& dist, std::mt19937_64& rng);

struct PolicyOutput {
  GaussianPolicy dist;
  double value = 0.0;
  PolicyState state;
};

// Throws PolicyFault on non-finite activations.
PolicyOutput policy_forward(const VecX& obs, const PolicyState& st, const PolicyParams& p);

// Versioned JSON document: architecture plus one array per block. A
// checkpoint also records the training iteration it was taken after.
void save_policy(std::ostream& os, const PolicyParams& p, int iteration = -1);
PolicyParams load_policy(std::istream& is, int* iteration = nullptr);

// Gain source driven by the policy. Deterministic mode uses the mean action.
class PolicyGains final : public GainSource {
 public:
  explicit PolicyGains(const PolicyParams& p) : params_(p), state_(initial_policy_state(p.arch)) {}
  void reset() override { state_ = initial_policy_state(params_.arch); }
  ReachingGains decide(const Observation& obs) override;

 private:
  PolicyParams params_;
  PolicyState state_;
};

}  // namespace exo
