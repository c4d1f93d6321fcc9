#include "exo/policy.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <istream>
#include <ostream>

namespace exo {

void PolicyArch::validate() const {
  if (obs_dim < 1) throw InvalidArgument("obs_dim must be >= 1");
  if (hidden < 1) throw InvalidArgument("hidden size must be >= 1");
  if (window < 1) throw InvalidArgument("attention window must be >= 1");
  if (!(k_max > 0.0) || !std::isfinite(k_max)) throw InvalidArgument("k_max must be finite and > 0");
}

std::vector<ParamBlock> parameter_layout(const PolicyArch& a) {
  a.validate();
  const Eigen::Index H = a.hidden, D = a.obs_dim;
  std::vector<ParamBlock> b;
  Eigen::Index off = 0;
  auto add = [&](const char* name, Eigen::Index r, Eigen::Index c) {
    b.push_back({name, off, r, c});
    off += r * c;
  };
  for (const char* n : {"lstm.W_i", "lstm.W_f", "lstm.W_o", "lstm.W_c"}) add(n, H, D);
  for (const char* n : {"lstm.U_i", "lstm.U_f", "lstm.U_o", "lstm.U_c"}) add(n, H, H);
  for (const char* n : {"lstm.b_i", "lstm.b_f", "lstm.b_o", "lstm.b_c"}) add(n, H, 1);
  add("attn.w_a", H, 1);
  add("attn.b_a", 1, 1);
  add("heads.W", 3, H);
  add("heads.b", 3, 1);
  add("critic.w", H, 1);
  add("critic.b", 1, 1);
  add("policy.log_std", 3, 1);
  return b;
}

Eigen::Index parameter_count(const PolicyArch& arch) {
  const auto b = parameter_layout(arch);
  return b.back().offset + b.back().size();
}

PolicyParams::PolicyParams(const PolicyArch& a) : arch(a), blocks_(parameter_layout(a)) {
  theta = VecX::Zero(blocks_.back().offset + blocks_.back().size());
}

const ParamBlock& PolicyParams::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw InvalidArgument("unknown parameter block '" + std::string(name) + "'");
}

namespace {

template <class Scalar, class Vec>
NetViewT<Scalar> make_view(const PolicyArch& a, Vec& theta) {
  if (theta.size() != parameter_count(a)) throw InvalidArgument("parameter vector has the wrong length");
  const Eigen::Index H = a.hidden, D = a.obs_dim;
  Scalar* p = theta.data();
  Eigen::Index off = 0;
  auto m = [&](Eigen::Index r, Eigen::Index c) {
    typename NetViewT<Scalar>::M out(p + off, r, c);
    off += r * c;
    return out;
  };
  auto v = [&](Eigen::Index n) {
    typename NetViewT<Scalar>::V out(p + off, n);
    off += n;
    return out;
  };
  auto s = [&]() -> Scalar& { return p[off++]; };
  auto W_i = m(H, D), W_f = m(H, D), W_o = m(H, D), W_c = m(H, D);
  auto U_i = m(H, H), U_f = m(H, H), U_o = m(H, H), U_c = m(H, H);
  auto b_i = v(H), b_f = v(H), b_o = v(H), b_c = v(H);
  auto w_a = v(H);
  Scalar& b_a = s();
  auto W_h = m(3, H);
  auto b_h = v(3);
  auto w_v = v(H);
  Scalar& b_v = s();
  auto log_std = v(3);
  return NetViewT<Scalar>{W_i, W_f, W_o, W_c, U_i, U_f, U_o, U_c, b_i, b_f, b_o, b_c,
                          w_a, b_a, W_h, b_h, w_v, b_v, log_std};
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

NetView view(const PolicyArch& arch, const VecX& theta) { return make_view<const double>(arch, theta); }
NetGradView view(const PolicyArch& arch, VecX& theta) { return make_view<double>(arch, theta); }

PolicyParams init_policy(const PolicyArch& arch, std::uint64_t seed, const ReachingGains& warm, double log_std) {
  warm.validate();
  PolicyParams p(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto&& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  };
  NetGradView v = view(p.arch, p.theta);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(arch.obs_dim));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden));
  fill(v.W_i, in_bound);
  fill(v.W_f, in_bound);
  fill(v.W_o, in_bound);
  fill(v.W_c, in_bound);
  fill(v.U_i, h_bound);
  fill(v.U_f, h_bound);
  fill(v.U_o, h_bound);
  fill(v.U_c, h_bound);
  v.b_f.setOnes();
  fill(v.w_a, h_bound);
  // Small head weights keep the initial gains at the warm start.
  fill(v.W_h, 0.01 * h_bound);
  v.b_h << softplus_inverse(warm.k1), softplus_inverse(warm.k2), softplus_inverse(warm.k3 - 1.0);
  fill(v.w_v, h_bound);
  v.log_std.setConstant(log_std);
  return p;
}

PolicyState initial_policy_state(const PolicyArch& arch) {
  PolicyState s;
  s.h = VecX::Zero(arch.hidden);
  s.c = VecX::Zero(arch.hidden);
  return s;
}

LstmCache lstm_cell(const NetView& p, const VecX& x, const VecX& h_prev, const VecX& c_prev) {
  LstmCache k;
  const auto sig = [](double z) { return sigmoid(z); };
  k.i = (p.W_i * x + p.U_i * h_prev + p.b_i).unaryExpr(sig);
  k.f = (p.W_f * x + p.U_f * h_prev + p.b_f).unaryExpr(sig);
  k.o = (p.W_o * x + p.U_o * h_prev + p.b_o).unaryExpr(sig);
  k.g = (p.W_c * x + p.U_c * h_prev + p.b_c).array().tanh().matrix();
  k.c = k.f.cwiseProduct(c_prev) + k.i.cwiseProduct(k.g);
  k.tc = k.c.array().tanh().matrix();
  k.h = k.o.cwiseProduct(k.tc);
  return k;
}

PolicyState lstm_step(const VecX& obs, const PolicyState& st, const PolicyParams& p) {
  if (obs.size() != p.arch.obs_dim) throw InvalidArgument("observation has the wrong dimension");
  if (st.h.size() != p.arch.hidden || st.c.size() != p.arch.hidden)
    throw InvalidArgument("policy state has the wrong dimension");
  const LstmCache k = lstm_cell(view(p.arch, p.theta), obs, st.h, st.c);
  PolicyState out;
  out.h = k.h;
  out.c = k.c;
  out.window = st.window;
  out.window.push_back(k.h);
  const auto n = static_cast<std::size_t>(p.arch.window);
  if (out.window.size() > n) out.window.erase(out.window.begin(), out.window.end() - static_cast<long>(n));
  return out;
}

AttentionResult attention_context(std::span<const VecX> window, const VecX& w_a, double b_a) {
  if (window.empty()) throw InvalidArgument("attention window is empty");
  const auto n = static_cast<Eigen::Index>(window.size());
  AttentionResult r;
  r.scores.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) r.scores[t] = w_a.dot(window[static_cast<std::size_t>(t)]) + b_a;
  const double mx = r.scores.maxCoeff();
  r.weights = (r.scores.array() - mx).exp().matrix();
  r.weights /= r.weights.sum();
  r.context = VecX::Zero(window.front().size());
  for (Eigen::Index t = 0; t < n; ++t) r.context += r.weights[t] * window[static_cast<std::size_t>(t)];
  return r;
}

AttentionResult attention_context(std::span<const VecX> window, const PolicyParams& p) {
  const NetView v = view(p.arch, p.theta);
  return attention_context(window, VecX(v.w_a), v.b_a);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus inverse needs y > 0");
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

ReachingGains gains_from_preactivation(const Eigen::Vector3d& a, double k_max) {
  ReachingGains g;
  g.k1 = std::min(softplus(a[0]), k_max);
  g.k2 = std::min(softplus(a[1]), k_max);
  g.k3 = 1.0 + std::min(softplus(a[2]), k_max);
  // softplus underflows to 0 for very negative inputs
  g.k1 = std::max(g.k1, std::numeric_limits<double>::min());
  g.k2 = std::max(g.k2, std::numeric_limits<double>::min());
  return g;
}

ReachingGains gain_heads(const VecX& context, const PolicyParams& p) {
  const NetView v = view(p.arch, p.theta);
  const Eigen::Vector3d a = v.W_h * context + v.b_h;
  return gains_from_preactivation(a, p.arch.k_max);
}

LogProbEntropy log_prob_entropy(const GaussianPolicy& dist, const Eigen::Vector3d& action) {
  constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)
  LogProbEntropy r;
  for (int j = 0; j < 3; ++j) {
    const double z = (action[j] - dist.mean[j]) * std::exp(-dist.log_std[j]);
    r.log_prob += -0.5 * z * z - dist.log_std[j] - 0.5 * kLog2Pi;
    r.entropy += 0.5 * (kLog2Pi + 1.0) + dist.log_std[j];
  }
  return r;
}

Eigen::Vector3d sample_action(const GaussianPolicy& dist, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d a;
  for (int j = 0; j < 3; ++j) a[j] = dist.mean[j] + std::exp(dist.log_std[j]) * n(rng);
  return a;
}

PolicyOutput policy_forward(const VecX& obs, const PolicyState& st, const PolicyParams& p) {
  PolicyOutput out;
  out.state = lstm_step(obs, st, p);
  const NetView v = view(p.arch, p.theta);
  const AttentionResult att = attention_context(out.state.window, VecX(v.w_a), v.b_a);
  out.dist.mean = v.W_h * att.context + v.b_h;
  out.dist.log_std = v.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  out.value = v.w_v.dot(att.context) + v.b_v;
  if (!out.dist.mean.allFinite() || !std::isfinite(out.value) || !out.state.c.allFinite())
    throw PolicyFault("non-finite policy activation");
  return out;
}

ReachingGains PolicyGains::decide(const Observation& obs) {
  PolicyOutput o = policy_forward(VecX(obs), state_, params_);
  state_ = std::move(o.state);
  return gains_from_preactivation(o.dist.mean, params_.arch.k_max);
}

namespace {
constexpr const char* kPolicyFormat = "exo-policy";
constexpr int kPolicyVersion = 1;
}  // namespace

void save_policy(std::ostream& os, const PolicyParams& p, int iteration) {
  nlohmann::ordered_json j;
  j["format"] = kPolicyFormat;
  j["version"] = kPolicyVersion;
  j["arch"] = {{"obs_dim", p.arch.obs_dim},
               {"hidden", p.arch.hidden},
               {"window", p.arch.window},
               {"k_max", p.arch.k_max}};
  if (iteration >= 0) j["iteration"] = iteration;
  auto& blocks = j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : p.blocks()) {
    std::vector<double> vals(p.theta.data() + b.offset, p.theta.data() + b.offset + b.size());
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"values", vals}});
  }
  os << j.dump(1) << '\n';
}

PolicyParams load_policy(std::istream& is, int* iteration) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("policy file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kPolicyFormat) throw InvalidArgument("not a policy document");
    if (j.at("version").get<int>() != kPolicyVersion)
      throw InvalidArgument("unsupported policy format version " + j.at("version").dump());
    PolicyArch a;
    const auto& ja = j.at("arch");
    a.obs_dim = ja.at("obs_dim").get<int>();
    a.hidden = ja.at("hidden").get<int>();
    a.window = ja.at("window").get<int>();
    a.k_max = ja.at("k_max").get<double>();
    PolicyParams p(a);
    const auto& jb = j.at("blocks");
    if (jb.size() != p.blocks().size()) throw InvalidArgument("policy file has the wrong number of blocks");
    for (std::size_t k = 0; k < jb.size(); ++k) {
      const ParamBlock& b = p.blocks()[k];
      if (jb[k].at("name").get<std::string>() != b.name || jb[k].at("rows").get<Eigen::Index>() != b.rows ||
          jb[k].at("cols").get<Eigen::Index>() != b.cols)
        throw InvalidArgument("policy block " + std::to_string(k) + " does not match the architecture");
      const auto vals = jb[k].at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(vals.size()) != b.size())
        throw InvalidArgument("policy block '" + b.name + "' has the wrong length");
      for (Eigen::Index i = 0; i < b.size(); ++i) p.theta[b.offset + i] = vals[static_cast<std::size_t>(i)];
    }
    if (!p.theta.allFinite()) throw InvalidArgument("policy file holds non-finite weights");
    if (iteration) *iteration = j.contains("iteration") ? j["iteration"].get<int>() : -1;
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed policy file: ") + e.what());
  }
}

}  // namespace exo
