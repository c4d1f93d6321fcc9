#include "exo/policy.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <utility>

using namespace exo;

namespace {

VecX randn(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

void set_block(PolicyParams& p, const std::string& name, double value) {
  const ParamBlock& b = p.block(name);
  p.theta.segment(b.offset, b.size()).setConstant(value);
}

}  // namespace

TEST_CASE("parameter registry partitions the flat vector") {
  const PolicyArch a;
  const auto blocks = parameter_layout(a);
  CHECK(parameter_count(a) == 6312);
  Eigen::Index next = 0;
  std::set<std::string> names;
  for (const auto& b : blocks) {
    CHECK(b.offset == next);
    next += b.size();
    CHECK(names.insert(b.name).second);
  }
  CHECK(next == parameter_count(a));
  CHECK(blocks.front().name == "lstm.W_i");
  CHECK(blocks.back().name == "policy.log_std");
}

TEST_CASE("LSTM with zero parameters") {
  const PolicyArch a;
  PolicyParams p(a);
  p.theta.setZero();
  std::mt19937_64 rng(1);
  const LstmCache c =
      lstm_cell(view(a, std::as_const(p.theta)), randn(a.obs_dim, rng), VecX::Zero(a.hidden), VecX::Zero(a.hidden));
  for (const VecX* g : {&c.i, &c.f, &c.o}) CHECK((g->array() == 0.5).all());
  CHECK(c.c.isZero(0.0));
  CHECK(c.h.isZero(0.0));
}

TEST_CASE("scalar LSTM with saturated gates") {
  PolicyArch a;
  a.obs_dim = 1;
  a.hidden = 1;
  PolicyParams p(a);
  p.theta.setZero();
  for (const char* b : {"lstm.b_i", "lstm.b_f", "lstm.b_o"}) set_block(p, b, 40.0);
  set_block(p, "lstm.W_c", 1.0);
  const LstmCache c = lstm_cell(view(a, std::as_const(p.theta)), VecX::Ones(1), VecX::Zero(1), VecX::Zero(1));
  CHECK(c.c[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK(c.h[0] == doctest::Approx(std::tanh(std::tanh(1.0))).epsilon(1e-12));
  CHECK(c.c[0] == doctest::Approx(0.7616).epsilon(1e-4));
  CHECK(c.h[0] == doctest::Approx(0.6420).epsilon(1e-4));
}

TEST_CASE("hidden state stays bounded") {
  std::mt19937_64 rng(2);
  const PolicyArch a;
  for (int k = 0; k < 20; ++k) {
    PolicyParams p(a);
    p.theta = randn(p.theta.size(), rng, 5.0);
    PolicyState st = initial_policy_state(a);
    for (int t = 0; t < 10; ++t) {
      st = lstm_step(randn(a.obs_dim, rng, 10.0), st, p);
      CHECK(st.h.cwiseAbs().maxCoeff() <= 1.0);
      CHECK(st.window.size() <= static_cast<std::size_t>(a.window));
    }
  }
}

TEST_CASE("attention weights") {
  std::mt19937_64 rng(3);
  const VecX h = randn(4, rng);
  const VecX w = randn(4, rng);
  std::vector<VecX> same(5, h);
  const AttentionResult u = attention_context(same, w, 0.3);
  for (int i = 0; i < 5; ++i) CHECK(u.weights[i] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK((u.context - h).norm() < 1e-15);

  // scores (0, ln 3) -> weights (1/4, 3/4)
  VecX wa = VecX::Zero(2);
  wa[0] = 1.0;
  VecX h1(2), h2(2);
  h1 << 0.0, 0.5;
  h2 << std::log(3.0), -0.25;
  std::vector<VecX> two{h1, h2};
  const AttentionResult r = attention_context(two, wa, 0.0);
  CHECK(r.weights[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.weights[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK((r.context - (0.25 * h1 + 0.75 * h2)).norm() < 1e-15);

  for (int k = 0; k < 50; ++k) {
    std::vector<VecX> win;
    for (int t = 0; t < 8; ++t) win.push_back(randn(6, rng));
    const AttentionResult x = attention_context(win, randn(6, rng), 1.0);
    CHECK(x.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((x.weights.array() > 0.0).all());
    CHECK((x.weights.array() < 1.0).all());
  }
}

TEST_CASE("gain heads") {
  const PolicyArch a;
  PolicyParams p(a);
  p.theta.setZero();
  std::mt19937_64 rng(4);
  const VecX ctx = randn(a.hidden, rng);
  for (double b : {-1.0, 0.0, 1.0}) {
    set_block(p, "heads.b", b);
    const ReachingGains g = gain_heads(ctx, p);
    const double sp = std::log(1.0 + std::exp(b));
    CHECK(g.k1 == doctest::Approx(sp).epsilon(1e-15));
    CHECK(g.k2 == doctest::Approx(sp).epsilon(1e-15));
    CHECK(g.k3 == doctest::Approx(1.0 + sp).epsilon(1e-15));
  }
  for (int k = 0; k < 200; ++k) {
    p.theta = randn(p.theta.size(), rng, 10.0);
    const VecX c = randn(a.hidden, rng);
    const ReachingGains g = gain_heads(c, p);
    CHECK(g.k1 > 0.0);
    CHECK(g.k2 > 0.0);
    CHECK(g.k3 >= 1.0);
    CHECK(g.k1 <= a.k_max);
    CHECK(gain_heads(c, p) == g);
  }
  CHECK(softplus_inverse(softplus(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("Gaussian log-probability and entropy") {
  GaussianPolicy d;
  d.mean = Eigen::Vector3d(0.3, -1.0, 2.0);
  d.log_std.setZero();
  const double ln2pi = std::log(2.0 * std::numbers::pi);
  const LogProbEntropy at_mean = log_prob_entropy(d, d.mean);
  CHECK(at_mean.log_prob == doctest::Approx(-1.5 * ln2pi).epsilon(1e-15));
  CHECK(at_mean.entropy == doctest::Approx(1.5 * std::log(2.0 * std::numbers::pi * std::numbers::e)).epsilon(1e-15));

  d.log_std = Eigen::Vector3d(-0.5, 0.2, 1.0);
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) expected -= d.log_std[j] + 0.5 * ln2pi;
  CHECK(log_prob_entropy(d, d.mean).log_prob == doctest::Approx(expected).epsilon(1e-15));

  double prev = -1e300;
  for (double t = 3.0; t >= 0.0; t -= 0.25) {
    const double lp = log_prob_entropy(d, d.mean + t * Eigen::Vector3d(1.0, -1.0, 0.5)).log_prob;
    CHECK(lp > prev);
    prev = lp;
  }
}

TEST_CASE("sampled actions match the distribution mean") {
  GaussianPolicy d;
  d.mean = Eigen::Vector3d(0.5, -2.0, 1.0);
  d.log_std = Eigen::Vector3d(-0.7, 0.0, 0.4);
  std::mt19937_64 rng(5);
  const int n = 100000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int k = 0; k < n; ++k) sum += sample_action(d, rng);
  const Eigen::Vector3d mean = sum / n;
  for (int j = 0; j < 3; ++j) CHECK(std::abs(mean[j] - d.mean[j]) < 3.0 * std::exp(d.log_std[j]) / std::sqrt(n));
}

TEST_CASE("policy forward is deterministic and clamps the log-std") {
  const PolicyArch a;
  PolicyParams p = init_policy(a, 6);
  const ParamBlock& ls = p.block("policy.log_std");
  p.theta[ls.offset] = 10.0;
  p.theta[ls.offset + 1] = -10.0;
  std::mt19937_64 rng(6);
  const VecX obs = randn(a.obs_dim, rng);
  const PolicyOutput o1 = policy_forward(obs, initial_policy_state(a), p);
  const PolicyOutput o2 = policy_forward(obs, initial_policy_state(a), p);
  CHECK(o1.dist.mean == o2.dist.mean);
  CHECK(o1.value == o2.value);
  CHECK(o1.dist.log_std[0] == kLogStdMax);
  CHECK(o1.dist.log_std[1] == kLogStdMin);

  PolicyGains g1(p), g2(p);
  const Observation ob = Observation::Constant(0.1);
  CHECK(g1.decide(ob) == g2.decide(ob));

  p.theta[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(policy_forward(obs, initial_policy_state(a), p), PolicyFault);
}

TEST_CASE("initial policy starts at the warm-start gains") {
  const ReachingGains warm{2.0, 5.0, 1.5};
  const PolicyParams p = init_policy({}, 7, warm);
  PolicyGains g(p);
  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    Observation o;
    for (int i = 0; i < kObsDim; ++i) o[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    const ReachingGains r = g.decide(o);
    CHECK(r.k1 == doctest::Approx(warm.k1).epsilon(0.05));
    CHECK(r.k2 == doctest::Approx(warm.k2).epsilon(0.05));
    CHECK(r.k3 == doctest::Approx(warm.k3).epsilon(0.05));
  }
}

TEST_CASE("policy file round trip") {
  const PolicyParams p = init_policy({}, 8);
  std::stringstream ss;
  save_policy(ss, p, 12);
  int it = -1;
  const PolicyParams q = load_policy(ss, &it);
  CHECK(it == 12);
  CHECK(q.arch == p.arch);
  CHECK((q.theta.array() == p.theta.array()).all());

  std::stringstream bad("{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(load_policy(bad), InvalidArgument);
  std::stringstream junk("not json");
  CHECK_THROWS_AS(load_policy(junk), InvalidArgument);
}
