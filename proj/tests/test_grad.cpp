#include "exo/grad.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <set>

using namespace exo;

namespace {

std::vector<PpoSample> random_batch(const PolicyParams& p, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, p.arch.window);
  std::vector<PpoSample> batch;
  for (int k = 0; k < n; ++k) {
    PpoSample s;
    const int L = len(rng);
    for (int t = 0; t < L; ++t) {
      VecX o(p.arch.obs_dim);
      for (auto& v : o) v = g(rng);
      s.seq.obs.push_back(o);
    }
    s.seq.h0 = VecX(p.arch.hidden);
    s.seq.c0 = VecX(p.arch.hidden);
    for (auto& v : s.seq.h0) v = 0.3 * g(rng);
    for (auto& v : s.seq.c0) v = 0.3 * g(rng);
    const SequenceForward f = forward_sequence(p, s.seq);
    for (int j = 0; j < 3; ++j) s.action[j] = f.dist.mean[j] + std::exp(f.dist.log_std[j]) * g(rng);
    // old log-prob a little off the current one so the ratio is not 1
    s.log_prob_old = log_prob_entropy(f.dist, s.action).log_prob + 0.05 * g(rng);
    s.advantage = g(rng);
    s.value_old = f.value + 0.1 * g(rng);
    s.ret = s.value_old + g(rng);
    s.penalty = std::abs(g(rng));
    batch.push_back(s);
  }
  return batch;
}

}  // namespace

TEST_CASE("clip rule hand cases") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == 1.2);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == -0.8);
  CHECK(clipped_surrogate(1.0, 0.7, 0.2) == 0.7);
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == -1.5);
}

TEST_CASE("serial and parallel gradients are bit-identical") {
  std::mt19937_64 rng(11);
  const PolicyParams p = init_policy({}, 11);
  const auto batch = random_batch(p, 32, rng);
  const LossGrad a = ppo_loss_grad(p, batch, {}, Exec::kSerial);
  const LossGrad b = ppo_loss_grad(p, batch, {}, Exec::kParallel);
  CHECK(a.parts.loss == b.parts.loss);
  CHECK((a.grad.array() == b.grad.array()).all());
  CHECK(ppo_loss(p, batch, {}).loss == doctest::Approx(a.parts.loss).epsilon(1e-14));
}

TEST_CASE("parameters the loss ignores get zero gradient") {
  std::mt19937_64 rng(12);
  const PolicyParams p = init_policy({}, 12);
  const auto batch = random_batch(p, 8, rng);
  LossConfig cfg;
  cfg.value_coef = 0.0;
  const LossGrad g = ppo_loss_grad(p, batch, cfg);
  for (const char* name : {"critic.w", "critic.b"}) {
    const ParamBlock& b = p.block(name);
    CHECK(g.grad.segment(b.offset, b.size()).isZero(0.0));
  }
  // the attention bias shifts every score equally
  CHECK(std::abs(g.grad[p.block("attn.b_a").offset]) < 1e-15);
}

TEST_CASE("gradient is linear in the loss coefficients") {
  std::mt19937_64 rng(13);
  const PolicyParams p = init_policy({}, 13);
  const auto batch = random_batch(p, 8, rng);
  LossConfig c1, c2, mix;
  c1.entropy_coef = 0.02;
  c1.value_coef = 0.1;
  c1.beta = 0.0;
  c2.entropy_coef = -0.01;
  c2.value_coef = 1.0;
  c2.beta = 0.4;
  const double a = 0.3, b = 0.7;  // a + b = 1 keeps the surrogate weight
  mix.entropy_coef = a * c1.entropy_coef + b * c2.entropy_coef;
  mix.value_coef = a * c1.value_coef + b * c2.value_coef;
  mix.beta = a * c1.beta + b * c2.beta;
  const VecX g1 = ppo_loss_grad(p, batch, c1).grad;
  const VecX g2 = ppo_loss_grad(p, batch, c2).grad;
  const VecX gm = ppo_loss_grad(p, batch, mix).grad;
  CHECK((gm - (a * g1 + b * g2)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + gm.cwiseAbs().maxCoeff()));
}

TEST_CASE("gradient check on the default network, seed 42") {
  const GradCheckReport r = gradient_check(PolicyArch{}, 42);
  CHECK(r.checked >= 200);
  CHECK(r.failed == 0);
  CHECK(r.passed());
  CHECK(r.max_rel < 1e-5);
  CHECK(r.significant > 150);

  std::set<std::string> seen;
  const auto layout = parameter_layout(PolicyArch{});
  for (const auto& b : r.blocks) {
    CHECK(seen.insert(b.name).second);
    CHECK(b.checked >= 1);
  }
  CHECK(seen.size() == layout.size());

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.contains("blocks"));
}

TEST_CASE("gradient check on a zero network with zero data") {
  GradCheckOptions opt;
  opt.zero_instance = true;
  const GradCheckReport r = gradient_check(PolicyArch{}, 1, opt);
  CHECK(r.passed());
  for (const auto& b : r.blocks) CHECK(b.max_abs == 0.0);
}

TEST_CASE("non-finite loss raises a gradient fault") {
  std::mt19937_64 rng(14);
  const PolicyParams p = init_policy({}, 14);
  auto batch = random_batch(p, 2, rng);
  batch[0].log_prob_old = -1e6;  // ratio overflows
  CHECK_THROWS_AS(ppo_loss_grad(p, batch, {}), GradientFault);
}
