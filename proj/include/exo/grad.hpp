#pragma once

// Reverse-mode gradients of the PPO loss through the gain policy.
//
// Every training sample carries the observations of its attention window and
// the LSTM state that preceded the window. The state is treated as a
// constant; the window is re-run under the current parameters and
// backpropagated through time.

#include "exo/policy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace exo {

struct SequenceSample {
  std::vector<VecX> obs;  // oldest first, 1..window entries
  VecX h0, c0;            // LSTM state before obs.front(), not differentiated
};

struct SequenceForward {
  std::vector<LstmCache> steps;
  AttentionResult attention;
  GaussianPolicy dist;
  double value = 0.0;
};

SequenceForward forward_sequence(const PolicyParams& p, const SequenceSample& s);

// Upstream derivatives of a scalar loss with respect to the network outputs.
struct OutputGrad {
  Eigen::Vector3d d_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d d_log_std = Eigen::Vector3d::Zero();  // w.r.t. the clamped log-std
  double d_value = 0.0;
};

// Accumulates d loss / d theta into grad (same layout as p.theta).
void backward_sequence(const PolicyParams& p, const SequenceSample& s, const SequenceForward& fwd,
                       const OutputGrad& dout, VecX& grad);

struct PpoSample {
  SequenceSample seq;
  Eigen::Vector3d action = Eigen::Vector3d::Zero();
  double log_prob_old = 0.0;
  double advantage = 0.0;
  double value_old = 0.0;
  double ret = 0.0;
  double penalty = 0.0;  // V1 + V2 of the sliding surface at the decision
};

struct LossConfig {
  double clip_eps = 0.2;
  double value_clip = 0.2;
  double beta = 0.1;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
};

// min(r A, clip(r, 1 - eps, 1 + eps) A); at a tie the unclipped branch.
double clipped_surrogate(double ratio, double advantage, double eps);

struct LossParts {
  double loss = 0.0;  // -(surrogate - beta penalty + c_e entropy - c_v value loss), minibatch means
  double surrogate = 0.0;
  double penalty = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

enum class Exec { kSerial, kParallel };

struct LossGrad {
  LossParts parts;
  VecX grad;
};

// Loss value only (no tape), used by finite differences.
LossParts ppo_loss(const PolicyParams& p, std::span<const PpoSample> batch, const LossConfig& cfg);

// Loss and exact gradient. Per-sample gradients are summed in sample order
// in both modes, so serial and parallel results are bit-identical. Throws
// GradientFault on a non-finite loss or ratio.
LossGrad ppo_loss_grad(const PolicyParams& p, std::span<const PpoSample> batch, const LossConfig& cfg,
                       Exec exec = Exec::kParallel);

struct BlockCheck {
  std::string name;
  int checked = 0;
  int failed = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double max_abs = 0.0;
};

struct GradCheckReport {
  PolicyArch arch;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double rel_tol = 1e-5;
  double abs_floor = 1e-8;
  int checked = 0;
  int failed = 0;
  int significant = 0;   // entries with max(|g|, |fd|) > 100 abs_floor
  double max_rel = 0.0;  // over the significant entries
  std::vector<BlockCheck> blocks;

  bool passed() const { return failed == 0; }
  std::string to_json() const;
};

struct GradCheckOptions {
  int parameters = 200;
  int batch = 6;
  double h = 1e-5;
  double rel_tol = 1e-5;
  double abs_floor = 1e-8;
  bool zero_instance = false;  // zero network on zero data
};

// Random instance of the given architecture, backward pass against central
// differences on a stratified random subset of parameters (every block is
// sampled). An entry passes when |g - fd| <= rel_tol max(|g|, |fd|) or
// |g - fd| <= abs_floor.
GradCheckReport gradient_check(const PolicyArch& arch, std::uint64_t seed, const GradCheckOptions& opt = {});

}  // namespace exo
