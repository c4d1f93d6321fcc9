#pragma once

#include "exo/types.hpp"

namespace exo {

struct RewardConfig {
  double lambda_pen = 0.5;  // weight of sum |s_i|
  double w_chatter = 1e-3;  // weight of ||u - u_prev||^2

  void validate() const;
};

// r = -(0.5 s's + lambda_pen sum|s_i| + w_chatter ||u - u_prev||^2)
double reward(const Vec5& s, const Vec5& u, const Vec5& u_prev, const RewardConfig& cfg);

// V1 + V2 = 0.5 s's + lambda sum|s_i|
double lyapunov_penalty(const Vec5& s, double lambda_pen);

}  // namespace exo
