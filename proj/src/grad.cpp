#include "exo/grad.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace exo {

SequenceForward forward_sequence(const PolicyParams& p, const SequenceSample& s) {
  if (s.obs.empty()) throw InvalidArgument("sequence sample has no observations");
  if (s.obs.size() > static_cast<std::size_t>(p.arch.window))
    throw InvalidArgument("sequence sample is longer than the attention window");
  const NetView v = view(p.arch, p.theta);
  SequenceForward f;
  f.steps.reserve(s.obs.size());
  std::vector<VecX> hs;
  hs.reserve(s.obs.size());
  const VecX* h = &s.h0;
  const VecX* c = &s.c0;
  for (const VecX& x : s.obs) {
    f.steps.push_back(lstm_cell(v, x, *h, *c));
    h = &f.steps.back().h;
    c = &f.steps.back().c;
    hs.push_back(*h);
  }
  f.attention = attention_context(hs, VecX(v.w_a), v.b_a);
  f.dist.mean = v.W_h * f.attention.context + v.b_h;
  f.dist.log_std = v.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  f.value = v.w_v.dot(f.attention.context) + v.b_v;
  return f;
}

void backward_sequence(const PolicyParams& p, const SequenceSample& s, const SequenceForward& fwd,
                       const OutputGrad& dout, VecX& grad) {
  if (grad.size() != p.theta.size()) throw InvalidArgument("gradient vector has the wrong length");
  const NetView v = view(p.arch, p.theta);
  NetGradView g = view(p.arch, grad);
  const VecX& ctx = fwd.attention.context;

  g.W_h.noalias() += dout.d_mean * ctx.transpose();
  g.b_h += dout.d_mean;
  g.w_v += dout.d_value * ctx;
  g.b_v += dout.d_value;
  for (int j = 0; j < 3; ++j)
    if (v.log_std[j] >= kLogStdMin && v.log_std[j] <= kLogStdMax) g.log_std[j] += dout.d_log_std[j];

  const VecX dctx = v.W_h.transpose() * dout.d_mean + dout.d_value * VecX(v.w_v);

  // attention: ctx = sum_t a_t h_t, a = softmax(w_a' h_t + b_a)
  const auto n = static_cast<Eigen::Index>(fwd.steps.size());
  const VecX& a = fwd.attention.weights;
  VecX da(n);
  for (Eigen::Index t = 0; t < n; ++t) da[t] = fwd.steps[static_cast<std::size_t>(t)].h.dot(dctx);
  const double mean_da = a.dot(da);
  std::vector<VecX> dh(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto k = static_cast<std::size_t>(t);
    const double de = a[t] * (da[t] - mean_da);
    g.w_a += de * fwd.steps[k].h;
    g.b_a += de;
    dh[k] = a[t] * dctx + de * VecX(v.w_a);
  }

  VecX dh_next = VecX::Zero(p.arch.hidden);
  VecX dc_next = VecX::Zero(p.arch.hidden);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const auto k = static_cast<std::size_t>(t);
    const LstmCache& st = fwd.steps[k];
    const VecX& x = s.obs[k];
    const VecX& h_prev = k == 0 ? s.h0 : fwd.steps[k - 1].h;
    const VecX& c_prev = k == 0 ? s.c0 : fwd.steps[k - 1].c;

    const VecX dht = dh[k] + dh_next;
    const VecX d_o = dht.cwiseProduct(st.tc);
    const VecX dc =
        dc_next + dht.cwiseProduct(st.o).cwiseProduct((1.0 - st.tc.array().square()).matrix());
    const VecX zi = dc.cwiseProduct(st.g).cwiseProduct(st.i.cwiseProduct((1.0 - st.i.array()).matrix()));
    const VecX zf = dc.cwiseProduct(c_prev).cwiseProduct(st.f.cwiseProduct((1.0 - st.f.array()).matrix()));
    const VecX zo = d_o.cwiseProduct(st.o.cwiseProduct((1.0 - st.o.array()).matrix()));
    const VecX zg = dc.cwiseProduct(st.i).cwiseProduct((1.0 - st.g.array().square()).matrix());
    dc_next = dc.cwiseProduct(st.f);

    g.W_i.noalias() += zi * x.transpose();
    g.W_f.noalias() += zf * x.transpose();
    g.W_o.noalias() += zo * x.transpose();
    g.W_c.noalias() += zg * x.transpose();
    g.U_i.noalias() += zi * h_prev.transpose();
    g.U_f.noalias() += zf * h_prev.transpose();
    g.U_o.noalias() += zo * h_prev.transpose();
    g.U_c.noalias() += zg * h_prev.transpose();
    g.b_i += zi;
    g.b_f += zf;
    g.b_o += zo;
    g.b_c += zg;
    dh_next = v.U_i.transpose() * zi + v.U_f.transpose() * zf + v.U_o.transpose() * zo + v.U_c.transpose() * zg;
  }
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double u1 = ratio * advantage;
  const double u2 = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
  return u1 <= u2 ? u1 : u2;
}

namespace {

struct SampleTerms {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double log_ratio = 0.0;
  bool clipped = false;
  OutputGrad dout;  // for the minibatch-mean loss
};

SampleTerms sample_terms(const SequenceForward& f, const PpoSample& smp, const LossConfig& cfg, double inv_b) {
  SampleTerms r;
  const LogProbEntropy lpe = log_prob_entropy(f.dist, smp.action);
  r.entropy = lpe.entropy;
  r.log_ratio = lpe.log_prob - smp.log_prob_old;
  const double ratio = std::exp(r.log_ratio);
  if (!std::isfinite(ratio) || !std::isfinite(f.value))
    throw GradientFault("non-finite probability ratio or value in the loss");
  r.clipped = std::abs(ratio - 1.0) > cfg.clip_eps;

  const double u1 = ratio * smp.advantage;
  const double u2 = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * smp.advantage;
  double dsurr_dlogp;
  if (u1 <= u2) {
    r.surrogate = u1;
    dsurr_dlogp = u1;
  } else {
    r.surrogate = u2;
    dsurr_dlogp = r.clipped ? 0.0 : u1;
  }

  const double dv = f.value - smp.value_old;
  const double v_clip = smp.value_old + std::clamp(dv, -cfg.value_clip, cfg.value_clip);
  const double l1 = (f.value - smp.ret) * (f.value - smp.ret);
  const double l2 = (v_clip - smp.ret) * (v_clip - smp.ret);
  double dvl_dv;
  if (l1 >= l2) {
    r.value_loss = 0.5 * l1;
    dvl_dv = f.value - smp.ret;
  } else {
    r.value_loss = 0.5 * l2;
    dvl_dv = std::abs(dv) < cfg.value_clip ? v_clip - smp.ret : 0.0;
  }

  const double dl_dlogp = -inv_b * dsurr_dlogp;
  for (int j = 0; j < 3; ++j) {
    const double inv_var = std::exp(-2.0 * f.dist.log_std[j]);
    const double diff = smp.action[j] - f.dist.mean[j];
    r.dout.d_mean[j] = dl_dlogp * diff * inv_var;
    r.dout.d_log_std[j] = dl_dlogp * (diff * diff * inv_var - 1.0) - inv_b * cfg.entropy_coef;
  }
  r.dout.d_value = inv_b * cfg.value_coef * dvl_dv;
  return r;
}

LossParts combine(std::span<const SampleTerms> terms, std::span<const PpoSample> batch, const LossConfig& cfg) {
  LossParts p;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double clipped = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    p.surrogate += terms[k].surrogate;
    p.value_loss += terms[k].value_loss;
    p.entropy += terms[k].entropy;
    p.penalty += batch[k].penalty;
    p.approx_kl += -terms[k].log_ratio;
    clipped += terms[k].clipped ? 1.0 : 0.0;
  }
  p.surrogate *= inv_b;
  p.value_loss *= inv_b;
  p.entropy *= inv_b;
  p.penalty *= inv_b;
  p.approx_kl *= inv_b;
  p.clip_fraction = clipped * inv_b;
  p.loss = -(p.surrogate - cfg.beta * p.penalty + cfg.entropy_coef * p.entropy - cfg.value_coef * p.value_loss);
  if (!std::isfinite(p.loss)) throw GradientFault("non-finite loss");
  return p;
}

void check_batch(const PolicyParams& p, std::span<const PpoSample> batch) {
  if (batch.empty()) throw InvalidArgument("empty minibatch");
  for (const auto& s : batch)
    if (s.seq.h0.size() != p.arch.hidden || s.seq.c0.size() != p.arch.hidden)
      throw InvalidArgument("sample LSTM state has the wrong dimension");
}

}  // namespace

LossParts ppo_loss(const PolicyParams& p, std::span<const PpoSample> batch, const LossConfig& cfg) {
  check_batch(p, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<SampleTerms> terms(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k)
    terms[k] = sample_terms(forward_sequence(p, batch[k].seq), batch[k], cfg, inv_b);
  return combine(terms, batch, cfg);
}

LossGrad ppo_loss_grad(const PolicyParams& p, std::span<const PpoSample> batch, const LossConfig& cfg, Exec exec) {
  check_batch(p, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto n = static_cast<long>(batch.size());
  std::vector<SampleTerms> terms(batch.size());
  std::vector<VecX> grads(batch.size());
  std::vector<std::string> errors(batch.size());

  auto one = [&](long k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      const SequenceForward f = forward_sequence(p, batch[i].seq);
      terms[i] = sample_terms(f, batch[i], cfg, inv_b);
      grads[i] = VecX::Zero(p.theta.size());
      backward_sequence(p, batch[i].seq, f, terms[i].dout, grads[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
#ifdef EXO_HAVE_OPENMP
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (long k = 0; k < n; ++k) one(k);
  } else {
    for (long k = 0; k < n; ++k) one(k);
  }
#else
  (void)exec;
  for (long k = 0; k < n; ++k) one(k);
#endif
  for (const auto& e : errors)
    if (!e.empty()) throw GradientFault(e);

  LossGrad out;
  out.parts = combine(terms, batch, cfg);
  out.grad = VecX::Zero(p.theta.size());
  for (const VecX& g : grads) out.grad += g;
  if (!out.grad.allFinite()) throw GradientFault("non-finite gradient");
  return out;
}

std::string GradCheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = {{"obs_dim", arch.obs_dim}, {"hidden", arch.hidden}, {"window", arch.window}, {"k_max", arch.k_max}};
  j["seed"] = seed;
  j["h"] = h;
  j["rel_tol"] = rel_tol;
  j["abs_floor"] = abs_floor;
  j["checked"] = checked;
  j["failed"] = failed;
  j["significant"] = significant;
  j["max_rel_error"] = max_rel;
  j["passed"] = passed();
  auto& b = j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& c : blocks)
    b.push_back({{"name", c.name},
                 {"checked", c.checked},
                 {"failed", c.failed},
                 {"max_rel_error", c.max_rel},
                 {"mean_rel_error", c.mean_rel},
                 {"max_abs_error", c.max_abs}});
  return j.dump(2);
}

GradCheckReport gradient_check(const PolicyArch& arch, std::uint64_t seed, const GradCheckOptions& opt) {
  if (opt.parameters < 1 || opt.batch < 1) throw InvalidArgument("gradient check needs parameters and samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  PolicyParams p(arch);
  LossConfig cfg;
  std::vector<PpoSample> batch(static_cast<std::size_t>(opt.batch));
  if (opt.zero_instance) {
    cfg.entropy_coef = 0.0;  // the entropy gradient is a nonzero constant
    for (auto& s : batch) {
      s.seq.obs.assign(static_cast<std::size_t>(arch.window), VecX::Zero(arch.obs_dim));
      s.seq.h0 = VecX::Zero(arch.hidden);
      s.seq.c0 = VecX::Zero(arch.hidden);
    }
  } else {
    p = init_policy(arch, seed);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] += 0.1 * normal(rng);
    NetGradView v = view(p.arch, p.theta);
    for (int j = 0; j < 3; ++j) v.log_std[j] = -0.5 + 0.4 * unit(rng);
    std::uniform_int_distribution<int> len(1, arch.window);
    for (auto& s : batch) {
      s.seq.obs.resize(static_cast<std::size_t>(len(rng)));
      for (auto& x : s.seq.obs) x = VecX::NullaryExpr(arch.obs_dim, [&] { return unit(rng); });
      s.seq.h0 = VecX::NullaryExpr(arch.hidden, [&] { return 0.5 * unit(rng); });
      s.seq.c0 = VecX::NullaryExpr(arch.hidden, [&] { return unit(rng); });
      const SequenceForward f = forward_sequence(p, s.seq);
      for (int j = 0; j < 3; ++j) s.action[j] = f.dist.mean[j] + std::exp(f.dist.log_std[j]) * normal(rng);
      s.log_prob_old = log_prob_entropy(f.dist, s.action).log_prob + 0.15 * normal(rng);
      s.advantage = normal(rng);
      s.value_old = f.value + 0.3 * normal(rng);
      s.ret = f.value + normal(rng);
      s.penalty = 0.5 * (unit(rng) + 1.0);
    }
  }

  const LossGrad lg = ppo_loss_grad(p, batch, cfg, Exec::kSerial);

  // stratified pick: a few entries of every block, the rest uniformly
  const auto total = p.theta.size();
  std::vector<char> chosen(static_cast<std::size_t>(total), 0);
  std::vector<Eigen::Index> picks;
  for (const auto& b : p.blocks()) {
    const Eigen::Index want = std::min<Eigen::Index>(b.size(), 4);
    std::uniform_int_distribution<Eigen::Index> d(0, b.size() - 1);
    for (Eigen::Index got = 0; got < want;) {
      const Eigen::Index i = b.offset + d(rng);
      if (chosen[static_cast<std::size_t>(i)]) continue;
      chosen[static_cast<std::size_t>(i)] = 1;
      picks.push_back(i);
      ++got;
    }
  }
  const auto target = std::min<Eigen::Index>(std::max<Eigen::Index>(opt.parameters, picks.size()), total);
  std::uniform_int_distribution<Eigen::Index> any(0, total - 1);
  while (static_cast<Eigen::Index>(picks.size()) < target) {
    const Eigen::Index i = any(rng);
    if (chosen[static_cast<std::size_t>(i)]) continue;
    chosen[static_cast<std::size_t>(i)] = 1;
    picks.push_back(i);
  }
  std::sort(picks.begin(), picks.end());

  GradCheckReport rep;
  rep.arch = arch;
  rep.seed = seed;
  rep.h = opt.h;
  rep.rel_tol = opt.rel_tol;
  rep.abs_floor = opt.abs_floor;
  for (const auto& b : p.blocks()) rep.blocks.push_back({b.name});

  PolicyParams q = p;
  std::size_t bi = 0;
  for (const Eigen::Index i : picks) {
    while (i >= p.blocks()[bi].offset + p.blocks()[bi].size()) ++bi;
    q.theta[i] = p.theta[i] + opt.h;
    const double lp = ppo_loss(q, batch, cfg).loss;
    q.theta[i] = p.theta[i] - opt.h;
    const double lm = ppo_loss(q, batch, cfg).loss;
    q.theta[i] = p.theta[i];
    const double fd = (lp - lm) / (2.0 * opt.h);
    const double g = lg.grad[i];
    const double abs_err = std::abs(g - fd);
    const double scale = std::max(std::abs(g), std::abs(fd));
    const double rel = scale > 0.0 ? abs_err / scale : 0.0;
    const bool ok = abs_err <= opt.rel_tol * scale || abs_err <= opt.abs_floor;
    BlockCheck& c = rep.blocks[bi];
    ++c.checked;
    c.failed += ok ? 0 : 1;
    c.max_rel = std::max(c.max_rel, rel);
    c.mean_rel += rel;
    c.max_abs = std::max(c.max_abs, abs_err);
    ++rep.checked;
    rep.failed += ok ? 0 : 1;
    if (scale > 100.0 * opt.abs_floor) {
      ++rep.significant;
      rep.max_rel = std::max(rep.max_rel, rel);
    }
  }
  for (auto& c : rep.blocks)
    if (c.checked > 0) c.mean_rel /= c.checked;
  return rep;
}

}  // namespace exo
