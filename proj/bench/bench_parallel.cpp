// Serial reference vs OpenMP for the two parallel kernels: the minibatch
// loss gradient and one training iteration (episode collection + update).
// Thread count comes from OMP_NUM_THREADS.

#include "exo/grad.hpp"
#include "exo/ppo.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace exo;

namespace {

std::vector<PpoSample> make_batch(const PolicyParams& p, int n) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<PpoSample> batch;
  for (int k = 0; k < n; ++k) {
    PpoSample s;
    for (int t = 0; t < p.arch.window; ++t) {
      VecX o(p.arch.obs_dim);
      for (auto& v : o) v = g(rng);
      s.seq.obs.push_back(o);
    }
    s.seq.h0 = VecX::Zero(p.arch.hidden);
    s.seq.c0 = VecX::Zero(p.arch.hidden);
    const SequenceForward f = forward_sequence(p, s.seq);
    for (int j = 0; j < 3; ++j) s.action[j] = f.dist.mean[j] + std::exp(f.dist.log_std[j]) * g(rng);
    s.log_prob_old = log_prob_entropy(f.dist, s.action).log_prob;
    s.advantage = g(rng);
    s.value_old = f.value;
    s.ret = f.value + g(rng);
    s.penalty = std::abs(g(rng));
    batch.push_back(s);
  }
  return batch;
}

void BM_LossGrad(benchmark::State& state, Exec exec) {
  const PolicyParams p = init_policy({}, 1);
  const auto batch = make_batch(p, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ppo_loss_grad(p, batch, {}, exec).grad.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TrainIteration(benchmark::State& state, Exec exec) {
  const RobotModel m;
  ControllerConfig c;
  c.kind = ControllerKind::kAitsmc;
  const std::vector<ScenarioSpec> sc{builtin_scenario(1), builtin_scenario(2)};
  PpoConfig cfg;
  cfg.iterations = 1;
  cfg.horizon = static_cast<int>(state.range(0));
  cfg.epochs = 2;
  const PolicyParams init = init_policy({}, 1, c.gains, cfg.init_log_std);
  for (auto _ : state) benchmark::DoNotOptimize(train(m, c, sc, init, cfg, {}, 0, exec).params.theta.data());
}

}  // namespace

BENCHMARK_CAPTURE(BM_LossGrad, serial, Exec::kSerial)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_LossGrad, parallel, Exec::kParallel)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainIteration, serial, Exec::kSerial)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainIteration, parallel, Exec::kParallel)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
