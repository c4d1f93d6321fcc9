#include "exo/reward.hpp"

#include <cmath>

namespace exo {

void RewardConfig::validate() const {
  if (!(lambda_pen >= 0.0) || !std::isfinite(lambda_pen)) throw InvalidArgument("lambda_pen must be >= 0");
  if (!(w_chatter >= 0.0) || !std::isfinite(w_chatter)) throw InvalidArgument("w_chatter must be >= 0");
}

double lyapunov_penalty(const Vec5& s, double lambda_pen) {
  return 0.5 * s.squaredNorm() + lambda_pen * s.cwiseAbs().sum();
}

double reward(const Vec5& s, const Vec5& u, const Vec5& u_prev, const RewardConfig& cfg) {
  return -(lyapunov_penalty(s, cfg.lambda_pen) + cfg.w_chatter * (u - u_prev).squaredNorm());
}

}  // namespace exo
