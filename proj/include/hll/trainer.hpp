#pragma once

// On-policy clipped actor-critic training over the vectorized environment:
// rollout collection, advantage estimation, minibatch updates, checkpoints
// and deterministic evaluation.

#include <hll/config.hpp>
#include <hll/env.hpp>
#include <hll/nn.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hll {

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 8;
  int minibatch = 4096;
  double learning_rate = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 1.0;
  int horizon = 64;
  int num_envs = 256;
  std::int64_t total_steps = 2'000'000;
  std::uint64_t seed = 1;
  std::vector<int> actor_hidden{256, 128};
  std::vector<int> critic_hidden{256, 128};
  double init_log_std = -0.5;
  bool normalize_obs = true;
  int checkpoint_every = 50;  ///< updates

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip range must lie in (0, 1)");
    if (epochs < 1 || minibatch < 1 || horizon < 1 || num_envs < 1 || checkpoint_every < 1)
      throw ConfigError("PPO counts must be at least 1");
    if (total_steps < 0) throw ConfigError("total steps must be nonnegative");
    if (learning_rate < 0.0 || entropy_coef < 0.0 || value_coef < 0.0 || max_grad_norm < 0.0)
      throw ConfigError("PPO coefficients must be nonnegative");
    if (actor_hidden.empty() || critic_hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  }
};

template <typename V>
void visit_config(V& v, PPOConfig& p) {
  v("ppo.gamma", p.gamma);
  v("ppo.lambda", p.lambda);
  v("ppo.clip", p.clip);
  v("ppo.epochs", p.epochs);
  v("ppo.minibatch", p.minibatch);
  v("ppo.learning_rate", p.learning_rate);
  v("ppo.entropy_coef", p.entropy_coef);
  v("ppo.value_coef", p.value_coef);
  v("ppo.max_grad_norm", p.max_grad_norm);
  v("ppo.horizon", p.horizon);
  v("ppo.num_envs", p.num_envs);
  std::uint64_t total = static_cast<std::uint64_t>(p.total_steps);
  v("ppo.total_steps", total);
  p.total_steps = static_cast<std::int64_t>(total);
  v("ppo.normalize_obs", p.normalize_obs);
  v("ppo.checkpoint_every", p.checkpoint_every);
  v("network.actor_hidden", p.actor_hidden);
  v("network.critic_hidden", p.critic_hidden);
  v("network.init_log_std", p.init_log_std);
}

using Policy = ActorCritic<float>;

// ---------------------------------------------------------------------------
// Rollouts

/// Column index t * N + i for step t of env i.
struct RolloutBatch {
  int horizon = 0;
  int num_envs = 0;
  MatX<float> obs;      ///< normalized, obs_dim x (T N)
  MatX<double> raw_obs; ///< unnormalized, for the running statistics
  MatX<float> actions;  ///< pre-clamp samples, act_dim x (T N)
  VecX<float> log_prob;
  VecX<float> values;
  VecX<double> rewards;
  std::vector<char> done;     ///< episode ended on this transition
  std::vector<char> timeout;  ///< ended by the time limit (bootstrapped)
  std::vector<char> valid;    ///< false for the auto-reset transition
  VecX<float> last_values;    ///< V of the observation after the final step
  VecX<float> advantages;
  VecX<float> returns;

  std::size_t size() const { return static_cast<std::size_t>(horizon) * num_envs; }
  std::size_t index(int t, int i) const { return static_cast<std::size_t>(t) * num_envs + i; }
};

/// Samples a ~ N(mu, sigma) per env, steps the batch, records everything.
/// Actions are stored before the environment's clamp.
inline void collect_rollouts(VecEnv& envs, const Policy& policy, const RunningNorm& norm, bool normalize, Rng& rng,
                             int horizon, RolloutBatch& b, bool deterministic = false) {
  const int n = envs.size();
  const int od = envs.obs_dim();
  const int ad = policy.spec().act_dim;
  if (policy.spec().obs_dim != od) throw ConfigError("policy observation width does not match the environment");
  if (ad != kActionDim) throw ConfigError("policy must emit 6 actions");
  b.horizon = horizon;
  b.num_envs = n;
  const Eigen::Index cols = static_cast<Eigen::Index>(horizon) * n;
  b.obs.resize(od, cols);
  b.raw_obs.resize(od, cols);
  b.actions.resize(ad, cols);
  b.log_prob.resize(cols);
  b.values.resize(cols);
  b.rewards.resize(cols);
  b.done.assign(static_cast<std::size_t>(cols), 0);
  b.timeout.assign(static_cast<std::size_t>(cols), 0);
  b.valid.assign(static_cast<std::size_t>(cols), 0);

  const VecX<float> log_std = policy.log_std();
  const VecX<float> sigma = log_std.array().exp();
  std::vector<float> act_rows(static_cast<std::size_t>(n) * ad);

  auto current_obs = [&](MatX<float>& normed, MatX<double>& raw) {
    Eigen::Map<const MatX<float>> o(envs.observations().data(), od, n);
    raw = o.cast<double>();
    normed = normalize ? norm.apply(o.eval()) : MatX<float>(o);
  };

  MatX<float> obs_n;
  MatX<double> obs_raw;
  current_obs(obs_n, obs_raw);
  for (int t = 0; t < horizon; ++t) {
    const MatX<float> mu = policy.mean(obs_n);
    const MatX<float> v = policy.value(obs_n);
    MatX<float> a = mu;
    if (!deterministic)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ad; ++j) a(j, i) += sigma[j] * static_cast<float>(rng.normal());
    const VecX<float> lp = gaussian_log_prob<float>(a, mu, log_std);

    const Eigen::Index c0 = static_cast<Eigen::Index>(t) * n;
    b.obs.middleCols(c0, n) = obs_n;
    b.raw_obs.middleCols(c0, n) = obs_raw;
    b.actions.middleCols(c0, n) = a;
    b.log_prob.segment(c0, n) = lp;
    b.values.segment(c0, n) = v.row(0).transpose();

    Eigen::Map<MatX<float>>(act_rows.data(), ad, n) = a;
    envs.step(std::span<const float>(act_rows));

    for (int i = 0; i < n; ++i) {
      const std::size_t k = b.index(t, i);
      const Outcome o = envs.outcomes()[static_cast<std::size_t>(i)];
      b.rewards[static_cast<Eigen::Index>(k)] = envs.rewards()[static_cast<std::size_t>(i)];
      b.valid[k] = envs.reset_flags()[static_cast<std::size_t>(i)] ? 0 : 1;
      b.done[k] = b.valid[k] && o != Outcome::kRunning;
      b.timeout[k] = b.valid[k] && o == Outcome::kTimeout;
    }
    current_obs(obs_n, obs_raw);
  }
  b.last_values = policy.value(obs_n).row(0).transpose();
}

/// Reverse-scan GAE per env. Time-limit endings bootstrap from the critic on
/// the terminal observation; other endings do not. Reset transitions carry
/// zero advantage and only supply that bootstrap value.
inline void compute_gae(RolloutBatch& b, double gamma, double lambda, bool normalize_advantages = true) {
  const Eigen::Index cols = static_cast<Eigen::Index>(b.size());
  b.advantages = VecX<float>::Zero(cols);
  b.returns = VecX<float>::Zero(cols);
  for (int i = 0; i < b.num_envs; ++i) {
    double gae = 0.0;
    double next_value = b.last_values[i];
    for (int t = b.horizon - 1; t >= 0; --t) {
      const std::size_t k = b.index(t, i);
      const Eigen::Index ki = static_cast<Eigen::Index>(k);
      const double v = b.values[ki];
      if (!b.valid[k]) {
        gae = 0.0;
        next_value = v;
        b.returns[ki] = static_cast<float>(v);
        continue;
      }
      const double bootstrap = (!b.done[k] || b.timeout[k]) ? 1.0 : 0.0;
      const double carry = b.done[k] ? 0.0 : 1.0;
      const double delta = b.rewards[ki] + gamma * bootstrap * next_value - v;
      gae = delta + gamma * lambda * carry * gae;
      b.advantages[ki] = static_cast<float>(gae);
      b.returns[ki] = static_cast<float>(gae + v);
      next_value = v;
    }
  }
  if (!normalize_advantages) return;
  double sum = 0.0, sq = 0.0;
  std::size_t cnt = 0;
  for (Eigen::Index k = 0; k < cols; ++k) {
    if (!b.valid[static_cast<std::size_t>(k)]) continue;
    sum += b.advantages[k];
    ++cnt;
  }
  if (cnt == 0) return;
  const double mean = sum / static_cast<double>(cnt);
  for (Eigen::Index k = 0; k < cols; ++k)
    if (b.valid[static_cast<std::size_t>(k)]) sq += (b.advantages[k] - mean) * (b.advantages[k] - mean);
  const double sd = std::sqrt(sq / static_cast<double>(cnt)) + 1e-8;
  for (Eigen::Index k = 0; k < cols; ++k)
    if (b.valid[static_cast<std::size_t>(k)]) b.advantages[k] = static_cast<float>((b.advantages[k] - mean) / sd);
}

// ---------------------------------------------------------------------------
// Loss and update

struct LossTerms {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

/// Per-sample clipped surrogate min(r A, clip(r) A).
inline double clipped_objective(double ratio, double adv, double eps) {
  return std::min(ratio * adv, clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

/// Minibatch loss = -mean(clipped surrogate) + c_v 0.5 mean((V - R)^2) - c_e H.
/// When `grad` is given, dL/dtheta is accumulated into it.
template <typename S>
LossTerms ppo_loss(const ActorCritic<S>& ac, const MatX<S>& obs, const MatX<S>& act, const VecX<S>& logp_old,
                   const VecX<S>& adv, const VecX<S>& ret, const PPOConfig& cfg, VecX<S>* grad) {
  const Eigen::Index m = obs.cols();
  const int ad = ac.spec().act_dim;
  LossTerms out;
  if (m == 0) return out;
  MlpCache<S> ca, cc;
  const MatX<S> mu = ac.mean(obs, grad ? &ca : nullptr);
  const MatX<S> v = ac.value(obs, grad ? &cc : nullptr);
  const VecX<S> ls = ac.log_std();
  const VecX<S> logp = gaussian_log_prob<S>(act, mu, ls);
  VecX<S> inv_var(ad);
  for (int j = 0; j < ad; ++j) inv_var[j] = std::exp(S(-2) * ls[j]);

  MatX<S> d_mu = MatX<S>::Zero(ad, m);
  VecX<S> d_ls = VecX<S>::Zero(ad);
  MatX<S> d_v(1, m);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double lr = static_cast<double>(logp[c]) - static_cast<double>(logp_old[c]);
    const double ratio = std::exp(lr);
    const double a = static_cast<double>(adv[c]);
    const double unclipped = ratio * a;
    const double clipped = clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
    out.policy_loss -= std::min(unclipped, clipped) * inv_m;
    if (std::abs(ratio - 1.0) > cfg.clip) out.clip_frac += inv_m;
    out.approx_kl += ((ratio - 1.0) - lr) * inv_m;
    const double g_logp = unclipped <= clipped ? -a * ratio * inv_m : 0.0;
    for (int j = 0; j < ad; ++j) {
      const S diff = act(j, c) - mu(j, c);
      d_mu(j, c) = static_cast<S>(g_logp) * diff * inv_var[j];
      d_ls[j] += static_cast<S>(g_logp) * (diff * diff * inv_var[j] - S(1));
    }
    const double err = static_cast<double>(v(0, c)) - static_cast<double>(ret[c]);
    out.value_loss += 0.5 * err * err * inv_m;
    d_v(0, c) = static_cast<S>(cfg.value_coef * err * inv_m);
  }
  out.entropy = static_cast<double>(gaussian_entropy<S>(ls));
  out.total = out.policy_loss + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
  if (grad) {
    if (grad->size() != static_cast<Eigen::Index>(ac.size())) *grad = VecX<S>::Zero(static_cast<Eigen::Index>(ac.size()));
    mlp_backward(ac.actor(), ac.params().data(), ca, d_mu, grad->data());
    mlp_backward(ac.critic(), ac.params().data(), cc, d_v, grad->data());
    for (int j = 0; j < ad; ++j)
      (*grad)[static_cast<Eigen::Index>(ac.log_std_offset()) + j] += d_ls[j] - static_cast<S>(cfg.entropy_coef);
  }
  return out;
}

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  int minibatches = 0;
  bool aborted = false;
  std::string message;
};

/// Epochs of shuffled minibatch steps. A non-finite gradient restores the
/// parameters and optimizer to their state before the call and then throws.
inline UpdateDiagnostics ppo_update(Policy& policy, Adam<float>& adam, const RolloutBatch& b, const PPOConfig& cfg,
                                    Rng& rng) {
  UpdateDiagnostics d;
  std::vector<Eigen::Index> idx;
  idx.reserve(b.size());
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.valid[k]) idx.push_back(static_cast<Eigen::Index>(k));
  if (idx.empty()) return d;

  const VecX<float> theta0 = policy.params();
  const Adam<float> adam0 = adam;
  adam.lr = cfg.learning_rate;
  VecX<float> grad;
  const int od = static_cast<int>(b.obs.rows()), ad = static_cast<int>(b.actions.rows());
  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const Eigen::Index m = static_cast<Eigen::Index>(stop - start);
      MatX<float> obs(od, m), act(ad, m);
      VecX<float> lp(m), adv(m), ret(m);
      for (Eigen::Index c = 0; c < m; ++c) {
        const Eigen::Index k = idx[start + static_cast<std::size_t>(c)];
        obs.col(c) = b.obs.col(k);
        act.col(c) = b.actions.col(k);
        lp[c] = b.log_prob[k];
        adv[c] = b.advantages[k];
        ret[c] = b.returns[k];
      }
      grad = VecX<float>::Zero(static_cast<Eigen::Index>(policy.size()));
      const LossTerms lt = ppo_loss<float>(policy, obs, act, lp, adv, ret, cfg, &grad);
      if (!grad.allFinite() || !std::isfinite(lt.total)) {
        policy.params() = theta0;
        adam = adam0;
        throw NonFiniteGradient("non-finite gradient in epoch " + std::to_string(e) + "; update discarded");
      }
      clip_grad_norm(grad, cfg.max_grad_norm);
      adam.step(policy.params(), grad);
      policy.clamp_log_std();
      d.policy_loss += lt.policy_loss;
      d.value_loss += lt.value_loss;
      d.entropy += lt.entropy;
      d.clip_frac += lt.clip_frac;
      d.approx_kl += lt.approx_kl;
      ++d.minibatches;
    }
  }
  const double inv = 1.0 / d.minibatches;
  d.policy_loss *= inv;
  d.value_loss *= inv;
  d.entropy *= inv;
  d.clip_frac *= inv;
  d.approx_kl *= inv;
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct TrainerState {
  Policy policy;
  Adam<float> adam;
  RunningNorm norm;
  int update = 0;
  std::int64_t steps = 0;
  std::string rng_state;
  std::string config_echo;
};

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

/// Text header (shapes, counters, config echo) followed by little-endian
/// float32 parameters and Adam moments, then float64 normalizer statistics.
inline void save_checkpoint(const std::string& path, const TrainerState& s) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw MissingArtifact("cannot write checkpoint '" + path + "'");
    const NetworkSpec& ns = s.policy.spec();
    os << "hll-checkpoint\n";
    os << "format_version " << kCheckpointVersion << "\n";
    os << "scalar float32-le\n";
    os << "obs_dim " << ns.obs_dim << "\n";
    os << "act_dim " << ns.act_dim << "\n";
    os << "actor_layers " << join_ints(s.policy.actor().sizes) << "\n";
    os << "critic_layers " << join_ints(s.policy.critic().sizes) << "\n";
    os << "activation elu\n";
    os << "param_count " << s.policy.size() << "\n";
    os << "update " << s.update << "\n";
    os << "steps " << s.steps << "\n";
    os << "adam_t " << s.adam.t << "\n";
    os << "norm_count " << detail::fmt_double(s.norm.count) << "\n";
    os << "rng " << s.rng_state << "\n";
    os << "config_bytes " << s.config_echo.size() << "\n";
    os << s.config_echo;
    os << "data\n";
    const std::size_t p = s.policy.size();
    for (std::size_t i = 0; i < p; ++i) detail::write_le(os, s.policy.params()[static_cast<Eigen::Index>(i)]);
    const bool has_moments = static_cast<std::size_t>(s.adam.m.size()) == p;
    for (std::size_t i = 0; i < p; ++i) detail::write_le(os, has_moments ? s.adam.m[static_cast<Eigen::Index>(i)] : 0.0f);
    for (std::size_t i = 0; i < p; ++i) detail::write_le(os, has_moments ? s.adam.v[static_cast<Eigen::Index>(i)] : 0.0f);
    for (int i = 0; i < ns.obs_dim; ++i) detail::write_le(os, s.norm.mean.size() ? s.norm.mean[i] : 0.0);
    for (int i = 0; i < ns.obs_dim; ++i) detail::write_le(os, s.norm.var.size() ? s.norm.var[i] : 1.0);
    if (!os) throw MissingArtifact("failed writing checkpoint '" + path + "'");
  }
  std::rename(tmp.c_str(), path.c_str());
}

inline std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

inline TrainerState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("checkpoint '" + path + "' not found");
  auto line = [&]() {
    std::string l;
    if (!std::getline(is, l)) throw MissingArtifact("checkpoint truncated");
    return l;
  };
  auto field = [&](const std::string& name) {
    const std::string l = line();
    if (l.rfind(name + " ", 0) != 0) throw MissingArtifact("checkpoint: expected '" + name + "'");
    return l.substr(name.size() + 1);
  };
  if (line() != "hll-checkpoint") throw MissingArtifact("'" + path + "' is not a checkpoint");
  if (std::stoi(field("format_version")) != kCheckpointVersion) throw MissingArtifact("unsupported checkpoint version");
  if (field("scalar") != "float32-le") throw MissingArtifact("unsupported checkpoint scalar type");
  NetworkSpec ns;
  ns.obs_dim = std::stoi(field("obs_dim"));
  ns.act_dim = std::stoi(field("act_dim"));
  const std::vector<int> al = parse_ints(field("actor_layers"));
  const std::vector<int> cl = parse_ints(field("critic_layers"));
  if (al.size() < 3 || cl.size() < 3) throw MissingArtifact("checkpoint layer list too short");
  ns.actor_hidden.assign(al.begin() + 1, al.end() - 1);
  ns.critic_hidden.assign(cl.begin() + 1, cl.end() - 1);
  if (field("activation") != "elu") throw MissingArtifact("unsupported activation");
  TrainerState s;
  s.policy = Policy(ns);
  const std::size_t p = std::stoull(field("param_count"));
  if (p != s.policy.size()) throw MissingArtifact("checkpoint parameter count does not match its layer shapes");
  s.update = std::stoi(field("update"));
  s.steps = std::stoll(field("steps"));
  const std::int64_t adam_t = std::stoll(field("adam_t"));
  const double norm_count = std::stod(field("norm_count"));
  s.rng_state = field("rng");
  const std::size_t cfg_bytes = std::stoull(field("config_bytes"));
  s.config_echo.resize(cfg_bytes);
  if (cfg_bytes && !is.read(s.config_echo.data(), static_cast<std::streamsize>(cfg_bytes)))
    throw MissingArtifact("checkpoint truncated");
  if (line() != "data") throw MissingArtifact("checkpoint: missing data marker");
  for (std::size_t i = 0; i < p; ++i) s.policy.params()[static_cast<Eigen::Index>(i)] = detail::read_le<float>(is);
  s.adam.resize(p);
  s.adam.t = adam_t;
  for (std::size_t i = 0; i < p; ++i) s.adam.m[static_cast<Eigen::Index>(i)] = detail::read_le<float>(is);
  for (std::size_t i = 0; i < p; ++i) s.adam.v[static_cast<Eigen::Index>(i)] = detail::read_le<float>(is);
  s.norm.resize(ns.obs_dim);
  s.norm.count = norm_count;
  for (int i = 0; i < ns.obs_dim; ++i) s.norm.mean[i] = detail::read_le<double>(is);
  for (int i = 0; i < ns.obs_dim; ++i) s.norm.var[i] = detail::read_le<double>(is);
  if (!s.policy.params().allFinite()) throw MissingArtifact("checkpoint holds non-finite parameters");
  return s;
}

// ---------------------------------------------------------------------------
// Trainer

inline const char* kMetricsCsvHeader =
    "update,steps,mean_return,success_rate,mean_energy_J,policy_loss,value_loss,entropy,clip_frac";

struct UpdateMetrics {
  int update = 0;
  std::int64_t steps = 0;
  int episodes = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  double success_rate = std::numeric_limits<double>::quiet_NaN();
  double mean_energy = std::numeric_limits<double>::quiet_NaN();
  UpdateDiagnostics diag;
};

inline void write_metrics_row(std::ostream& os, const UpdateMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.update,
                static_cast<long long>(m.steps), m.mean_return, m.success_rate, m.mean_energy, m.diag.policy_loss,
                m.diag.value_loss, m.diag.entropy, m.diag.clip_frac);
  os << buf;
}

/// Stream tags mixed into the master seed.
inline constexpr std::uint64_t kInitStream = 0x1001;
inline constexpr std::uint64_t kSampleStream = 0x1002;
inline constexpr std::uint64_t kResumeStream = 0x2000;

class Trainer {
 public:
  Trainer(EnvConfig env_cfg, PPOConfig cfg)
      : env_cfg_(std::move(env_cfg)), cfg_(std::move(cfg)), rng_(derive_seed(cfg_.seed, kSampleStream)) {
    cfg_.validate();
    env_cfg_.validate();
    envs_ = std::make_unique<VecEnv>(env_cfg_, cfg_.num_envs, cfg_.seed);
    NetworkSpec ns;
    ns.obs_dim = envs_->obs_dim();
    ns.act_dim = kActionDim;
    ns.actor_hidden = cfg_.actor_hidden;
    ns.critic_hidden = cfg_.critic_hidden;
    ns.init_log_std = cfg_.init_log_std;
    state_.policy = Policy(ns);
    Rng init(derive_seed(cfg_.seed, kInitStream));
    state_.policy.initialize(init);
    state_.adam.resize(state_.policy.size());
    state_.adam.lr = cfg_.learning_rate;
    state_.norm.resize(ns.obs_dim);
    envs_->reset();
  }

  const PPOConfig& config() const { return cfg_; }
  const EnvConfig& env_config() const { return env_cfg_; }
  VecEnv& envs() { return *envs_; }
  const Policy& policy() const { return state_.policy; }
  const RunningNorm& norm() const { return state_.norm; }
  int updates() const { return state_.update; }
  std::int64_t steps() const { return state_.steps; }
  std::int64_t steps_per_update() const { return static_cast<std::int64_t>(cfg_.horizon) * cfg_.num_envs; }
  const RolloutBatch& last_batch() const { return batch_; }

  /// Snapshot for checkpointing; `manifest` is stored verbatim.
  TrainerState snapshot(const std::string& manifest) const {
    TrainerState s = state_;
    s.rng_state = rng_.state();
    s.config_echo = manifest;
    return s;
  }

  /// Restores optimizer, parameters and counters. Environments restart from
  /// fresh episodes on a stream derived from the update index.
  void restore(const TrainerState& s) {
    if (s.policy.spec().obs_dim != envs_->obs_dim()) throw ConfigError("checkpoint does not match the observation size");
    state_ = s;
    if (!s.rng_state.empty()) rng_.set_state(s.rng_state);
    envs_ = std::make_unique<VecEnv>(env_cfg_, cfg_.num_envs,
                                     derive_seed(cfg_.seed, kResumeStream + static_cast<std::uint64_t>(s.update)));
    envs_->reset();
  }

  UpdateMetrics update() {
    envs_->clear_finished();
    collect_rollouts(*envs_, state_.policy, state_.norm, cfg_.normalize_obs, rng_, cfg_.horizon, batch_);
    compute_gae(batch_, cfg_.gamma, cfg_.lambda);
    UpdateMetrics m;
    try {
      m.diag = ppo_update(state_.policy, state_.adam, batch_, cfg_, rng_);
    } catch (const NonFiniteGradient& e) {
      m.diag.aborted = true;
      m.diag.message = e.what();
    }
    if (cfg_.normalize_obs) {
      std::vector<Eigen::Index> cols;
      for (std::size_t k = 0; k < batch_.size(); ++k)
        if (batch_.valid[k]) cols.push_back(static_cast<Eigen::Index>(k));
      MatX<double> sel(batch_.raw_obs.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) sel.col(static_cast<Eigen::Index>(c)) = batch_.raw_obs.col(cols[c]);
      state_.norm.update(sel);
    }
    ++state_.update;
    state_.steps += steps_per_update();
    m.update = state_.update;
    m.steps = state_.steps;
    const auto& fin = envs_->finished();
    m.episodes = static_cast<int>(fin.size());
    if (!fin.empty()) {
      double ret = 0.0, energy = 0.0;
      int goals = 0;
      for (const EpisodeSummary& s : fin) {
        ret += s.total_reward;
        energy += s.energy;
        goals += s.outcome == Outcome::kGoal;
      }
      m.mean_return = ret / static_cast<double>(fin.size());
      m.success_rate = static_cast<double>(goals) / static_cast<double>(fin.size());
      m.mean_energy = energy / static_cast<double>(fin.size());
    }
    return m;
  }

 private:
  EnvConfig env_cfg_;
  PPOConfig cfg_;
  Rng rng_;
  std::unique_ptr<VecEnv> envs_;
  TrainerState state_;
  RolloutBatch batch_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_energy = 0.0;          ///< J, all episodes
  double mean_energy_success = std::numeric_limits<double>::quiet_NaN();  ///< J, successful episodes
  std::vector<EpisodeSummary> summaries;
};

/// Runs the mean action until `episodes` episodes finish, in completion order.
inline EvalResult evaluate_policy(const EnvConfig& cfg, const Policy& policy, const RunningNorm& norm, bool normalize,
                                  int num_envs, int episodes, std::uint64_t seed, int max_steps = 1'000'000) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  VecEnv envs(cfg, num_envs, seed);
  envs.reset();
  Rng unused(0);
  RolloutBatch b;
  EvalResult r;
  // Fixed quota per env, so short episodes are not over-represented.
  std::vector<int> quota(static_cast<std::size_t>(num_envs), episodes / num_envs);
  for (int i = 0; i < episodes % num_envs; ++i) ++quota[static_cast<std::size_t>(i)];
  for (int step = 0; step < max_steps && static_cast<int>(r.summaries.size()) < episodes; ++step) {
    envs.clear_finished();
    collect_rollouts(envs, policy, norm, normalize, unused, 1, b, true);
    for (const EpisodeSummary& s : envs.finished()) {
      if (quota[s.env] == 0) continue;
      --quota[s.env];
      r.summaries.push_back(s);
    }
  }
  r.episodes = static_cast<int>(r.summaries.size());
  double e_all = 0.0, e_ok = 0.0;
  for (const EpisodeSummary& s : r.summaries) {
    e_all += s.energy;
    if (s.outcome == Outcome::kGoal) {
      ++r.successes;
      e_ok += s.energy;
    }
  }
  if (r.episodes > 0) {
    r.success_rate = static_cast<double>(r.successes) / r.episodes;
    r.mean_energy = e_all / r.episodes;
  }
  if (r.successes > 0) r.mean_energy_success = e_ok / r.successes;
  return r;
}

}  // namespace hll
