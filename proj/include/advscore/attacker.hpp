#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/environment.hpp"
#include "advscore/neural.hpp"
#include "advscore/rng.hpp"
#include "advscore/scoring.hpp"
#include "advscore/softdtw.hpp"

namespace advscore {

/// Exploration noise of the continuous head: starts at `initial`, drops by
/// `step` every `every` epochs, never below `floor`.
struct SigmaSchedule {
  double initial = 0.6;
  double step = 0.1;
  double floor = 0.1;
  int every = 10;

  double at(int epoch) const {
    const double s = initial - step * static_cast<double>(epoch / std::max(1, every));
    return std::max(floor, s);
  }
};

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.98;
  double lam = 0.95;
  SigmaSchedule sigma;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  int epochs = 4;
  int minibatch = 256;
  int max_episode_len = 100;
  int episodes_per_cycle = 10;
  double dtw_weight = 0.0;
  double dtw_eta = 1.0;
  int dtw_pairs = 8;
  /// Environment units per unit of policy output.
  double action_scale = 1.0;
  int embed_width = 32;
  int hidden_width = 64;

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw UsageError("clip_eps must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in (0, 1]");
    if (!(lam >= 0.0 && lam <= 1.0)) throw UsageError("lam must lie in [0, 1]");
    if (!(sigma.floor > 0.0) || sigma.initial < sigma.floor) throw UsageError("sigma schedule must stay positive");
    if (epochs < 0 || minibatch <= 0 || episodes_per_cycle < 0 || max_episode_len <= 0) {
      throw UsageError("ppo budgets must be positive");
    }
    if (dtw_weight < 0.0 || !(dtw_eta > 0.0) || dtw_pairs < 0) throw UsageError("invalid soft-DTW settings");
    if (!(action_scale > 0.0) || embed_width <= 0 || hidden_width <= 0) throw UsageError("invalid network sizes");
  }
};

// ---------------------------------------------------------------------------
// Advantage and loss primitives

/// Discounted returns R_t = sum_k gamma^k r_{t+k}, zero after the last step.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

/// GAE by backward recursion, bootstrapping V(s_T) = 0 after the final step.
inline std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                                       double lam) {
  if (rewards.size() != values.size()) throw UsageError("compute_gae: rewards and values differ in length");
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double next_value = t + 1 < values.size() ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * lam * running;
    adv[t] = running;
  }
  return adv;
}

inline double critic_loss(std::span<const double> predicted, std::span<const double> returns) {
  if (predicted.size() != returns.size()) throw UsageError("critic_loss: length mismatch");
  if (predicted.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    const double d = predicted[t] - returns[t];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

/// Clipped surrogate -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A)).
inline double ppo_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                       std::span<const double> advantages, double eps) {
  if (new_logprobs.size() != old_logprobs.size() || new_logprobs.size() != advantages.size()) {
    throw UsageError("ppo_loss: length mismatch");
  }
  if (new_logprobs.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < new_logprobs.size(); ++t) {
    const double rho = std::exp(new_logprobs[t] - old_logprobs[t]);
    const double a = advantages[t];
    s += std::min(rho * a, std::clamp(rho, 1.0 - eps, 1.0 + eps) * a);
  }
  return -s / static_cast<double>(new_logprobs.size());
}

/// d(ppo_loss)/d(new_logprob_t). Zero wherever the clipped term is the
/// active minimum.
inline std::vector<double> ppo_loss_grad(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                                         std::span<const double> advantages, double eps) {
  if (new_logprobs.size() != old_logprobs.size() || new_logprobs.size() != advantages.size()) {
    throw UsageError("ppo_loss_grad: length mismatch");
  }
  const double n = static_cast<double>(new_logprobs.size());
  std::vector<double> g(new_logprobs.size(), 0.0);
  for (std::size_t t = 0; t < g.size(); ++t) {
    const double rho = std::exp(new_logprobs[t] - old_logprobs[t]);
    const double a = advantages[t];
    const double unclipped = rho * a;
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * a;
    if (unclipped <= clipped) g[t] = -rho * a / n;
  }
  return g;
}

inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

// ---------------------------------------------------------------------------
// Policy

struct PolicyGrads {
  GradBuffer dis_embed, dis_actor, con_embed, con_actor, critic_embed, critic;

  void zero() {
    for (GradBuffer* g : {&dis_embed, &dis_actor, &con_embed, &con_actor, &critic_embed, &critic}) g->zero();
  }
};

/// Activations of every network for one state.
struct PolicyPass {
  ForwardCache dis_embed, dis_actor, con_embed, con_actor, critic_embed, critic;
  std::vector<double> probs;
  std::vector<double> means;
  double value = 0.0;
};

/// Discrete actor, continuous actor and critic, each behind its own state
/// embedding. The continuous actor reads the embedding concatenated with
/// the discrete probabilities.
struct HybridPolicy {
  App app = App::Cloud;
  DenseNet dis_embed, dis_actor, con_embed, con_actor, critic_embed, critic;

  static HybridPolicy init(App app, const PpoConfig& cfg, Rng& rng) {
    const auto k = static_cast<std::size_t>(module_count(app));
    const auto m = static_cast<std::size_t>(action_count(app));
    const auto s = static_cast<std::size_t>(slot_count(app));
    const auto e = static_cast<std::size_t>(cfg.embed_width);
    const auto h = static_cast<std::size_t>(cfg.hidden_width);
    using A = Activation;
    HybridPolicy p;
    p.app = app;
    p.dis_embed = DenseNet::random({k, e}, {A::Tanh}, rng);
    p.dis_actor = DenseNet::random({e, h, h, m}, {A::Tanh, A::Tanh, A::Softmax}, rng);
    p.con_embed = DenseNet::random({k, e}, {A::Tanh}, rng);
    p.con_actor = DenseNet::random({e + m, h, h, s}, {A::Tanh, A::Tanh, A::Identity}, rng);
    p.critic_embed = DenseNet::random({k, e}, {A::Tanh}, rng);
    p.critic = DenseNet::random({e, h, h, 1}, {A::Tanh, A::Tanh, A::Identity}, rng);
    return p;
  }

  PolicyGrads make_grads() const {
    return {dis_embed.make_grad_buffer(), dis_actor.make_grad_buffer(), con_embed.make_grad_buffer(),
            con_actor.make_grad_buffer(),  critic_embed.make_grad_buffer(), critic.make_grad_buffer()};
  }

  friend bool operator==(const HybridPolicy&, const HybridPolicy&) = default;
};

inline PolicyPass policy_forward(const HybridPolicy& policy, std::span<const double> state, bool with_critic = true) {
  PolicyPass pass;
  const auto de = forward(policy.dis_embed, state, &pass.dis_embed);
  pass.probs = forward(policy.dis_actor, de, &pass.dis_actor);
  auto ce = forward(policy.con_embed, state, &pass.con_embed);
  ce.insert(ce.end(), pass.probs.begin(), pass.probs.end());
  pass.means = forward(policy.con_actor, ce, &pass.con_actor);
  if (with_critic) {
    const auto cre = forward(policy.critic_embed, state, &pass.critic_embed);
    pass.value = forward(policy.critic, cre, &pass.critic)[0];
  }
  return pass;
}

/// Chains output gradients (probabilities, continuous means, value) back
/// through all networks, accumulating into `grads`.
inline void policy_backward(const HybridPolicy& policy, const PolicyPass& pass, std::span<const double> d_probs,
                            std::span<const double> d_means, double d_value, PolicyGrads& grads) {
  const std::size_t e = policy.con_embed.output_size();
  const auto g_con_in = backward(policy.con_actor, pass.con_actor, d_means, grads.con_actor);
  backward(policy.con_embed, pass.con_embed, std::span<const double>(g_con_in).first(e), grads.con_embed);

  std::vector<double> g_probs(d_probs.begin(), d_probs.end());
  for (std::size_t i = 0; i < g_probs.size(); ++i) g_probs[i] += g_con_in[e + i];
  const auto g_de = backward(policy.dis_actor, pass.dis_actor, g_probs, grads.dis_actor);
  backward(policy.dis_embed, pass.dis_embed, g_de, grads.dis_embed);

  if (d_value != 0.0 && !pass.critic.values.empty()) {
    const double dv[1] = {d_value};
    const auto g_cre = backward(policy.critic, pass.critic, dv, grads.critic);
    backward(policy.critic_embed, pass.critic_embed, g_cre, grads.critic_embed);
  }
}

/// Continuous slots sampled for a discrete action: none for idle actions,
/// two for bank in-out, otherwise the action's own slot.
inline std::vector<std::size_t> sampled_slots(App app, int discrete) {
  if (is_idle_action(app, discrete)) return {};
  if (app == App::Bank && discrete == bank::kInOut) return {bank::kInOut, bank::kInOutConsumeSlot};
  return {static_cast<std::size_t>(discrete)};
}

struct SampledAction {
  HybridAction action;        // environment units, not yet clamped
  int discrete = 0;
  double raw = 0.0;           // policy-unit sample for the first slot
  double raw2 = 0.0;          // second slot (bank in-out consume)
  double logprob_dis = 0.0;
  double logprob_con = 0.0;
  double value = 0.0;
};

inline double continuous_logprob(App app, int discrete, std::span<const double> means, double raw, double raw2,
                                 double sigma) {
  const auto slots = sampled_slots(app, discrete);
  double lp = 0.0;
  if (!slots.empty()) lp += gaussian_logprob(raw, means[slots[0]], sigma);
  if (slots.size() > 1) lp += gaussian_logprob(raw2, means[slots[1]], sigma);
  return lp;
}

inline SampledAction sample_action(const HybridPolicy& policy, std::span<const double> state, double sigma,
                                   double action_scale, Rng& rng) {
  if (!(sigma > 0.0)) throw UsageError("sample_action: sigma must be positive");
  const PolicyPass pass = policy_forward(policy, state, true);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  int c = static_cast<int>(pass.probs.size()) - 1;
  double cum = 0.0;
  for (std::size_t i = 0; i < pass.probs.size(); ++i) {
    cum += pass.probs[i];
    if (u < cum) {
      c = static_cast<int>(i);
      break;
    }
  }

  SampledAction out;
  out.discrete = c;
  out.action.discrete = c;
  out.logprob_dis = std::log(pass.probs[static_cast<std::size_t>(c)]);
  out.value = pass.value;
  const auto slots = sampled_slots(policy.app, c);
  if (!slots.empty()) {
    out.raw = gaussian_sample(pass.means[slots[0]], sigma, rng);
    out.action.continuous = out.raw * action_scale;
  }
  if (slots.size() > 1) {
    out.raw2 = gaussian_sample(pass.means[slots[1]], sigma, rng);
    out.action.continuous2 = out.raw2 * action_scale;
  }
  out.logprob_con = continuous_logprob(policy.app, c, pass.means, out.raw, out.raw2, sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts

struct Transition {
  ModuleVector state;
  HybridAction action;  // as applied by the environment (clamped)
  int discrete = 0;
  double raw = 0.0;
  double raw2 = 0.0;
  double reward = 0.0;
  double logprob_dis = 0.0;
  double logprob_con = 0.0;
  double value_est = 0.0;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> transitions;
  std::vector<double> advantages;
  std::vector<double> returns;

  double total_reward() const {
    double s = 0.0;
    for (const auto& t : transitions) s += t.reward;
    return s;
  }

  std::vector<HybridAction> actions() const {
    std::vector<HybridAction> a;
    a.reserve(transitions.size());
    for (const auto& t : transitions) a.push_back(t.action);
    return a;
  }
};

/// Runs `n_episodes` full episodes under `phi`, recording old log-probs and
/// critic values for the PPO update.
inline std::vector<Trajectory> collect_trajectories(const HybridPolicy& policy, const ScoringParams& phi,
                                                    const EnvConfig& env_cfg, int n_episodes, double sigma,
                                                    double action_scale, Rng& rng) {
  std::vector<Trajectory> out;
  if (n_episodes <= 0) return out;
  Environment env(env_cfg, phi);
  out.reserve(static_cast<std::size_t>(n_episodes));
  for (int ep = 0; ep < n_episodes; ++ep) {
    env.reset(rng());
    Trajectory traj;
    traj.transitions.reserve(static_cast<std::size_t>(env_cfg.max_episode_len));
    bool done = false;
    while (!done) {
      Transition tr;
      tr.state = env.state().modules;
      const SampledAction s = sample_action(policy, tr.state, sigma, action_scale, rng);
      const StepOutcome o = env.step(s.action);
      tr.action = HybridAction{o.record.action_type, o.record.amount, o.record.amount2};
      tr.discrete = s.discrete;
      tr.raw = s.raw;
      tr.raw2 = s.raw2;
      tr.reward = o.reward;
      tr.logprob_dis = s.logprob_dis;
      tr.logprob_con = s.logprob_con;
      tr.value_est = s.value;
      tr.done = o.done;
      done = o.done;
      traj.transitions.push_back(std::move(tr));
    }
    out.push_back(std::move(traj));
  }
  return out;
}

/// Fills returns and GAE advantages (unnormalized) from stored rewards and
/// collection-time value estimates.
inline void estimate_advantages(Trajectory& traj, double gamma, double lam) {
  std::vector<double> rewards, values;
  for (const auto& t : traj.transitions) {
    rewards.push_back(t.reward);
    values.push_back(t.value_est);
  }
  traj.advantages = compute_gae(rewards, values, gamma, lam);
  traj.returns = discounted_returns(rewards, gamma);
}

// ---------------------------------------------------------------------------
// Update

/// Soft encoding of one position: probability-weighted continuous means,
/// so the regularizer has a gradient into both actors.
inline std::vector<double> soft_encoding(App app, std::span<const double> probs, std::span<const double> means) {
  std::vector<double> v(static_cast<std::size_t>(slot_count(app)), 0.0);
  for (int c = 0; c < action_count(app); ++c) {
    for (std::size_t slot : sampled_slots(app, c)) v[slot] = probs[static_cast<std::size_t>(c)] * means[slot];
  }
  return v;
}

/// Adds d/d(probs) and d/d(means) of the soft encoding given d/d(encoding).
inline void soft_encoding_backward(App app, std::span<const double> probs, std::span<const double> means,
                                   std::span<const double> d_enc, std::span<double> d_probs, std::span<double> d_means) {
  for (int c = 0; c < action_count(app); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    for (std::size_t slot : sampled_slots(app, c)) {
      d_probs[ci] += d_enc[slot] * means[slot];
      d_means[slot] += d_enc[slot] * probs[ci];
    }
  }
}

struct AttackerOptimizer {
  AdamState dis_embed, dis_actor, con_embed, con_actor, critic_embed, critic;

  static AttackerOptimizer for_policy(const HybridPolicy& p) {
    return {AdamState::for_net(p.dis_embed), AdamState::for_net(p.dis_actor),    AdamState::for_net(p.con_embed),
            AdamState::for_net(p.con_actor), AdamState::for_net(p.critic_embed), AdamState::for_net(p.critic)};
  }
};

struct UpdateReport {
  double critic_loss = 0.0;  // mean over minibatches of the last epoch
  double loss_dis = 0.0;
  double loss_con = 0.0;
  double loss_dtw = 0.0;
  int optimizer_steps = 0;
};

/// Soft-DTW loss of the policy's soft encodings against real traces, with
/// gradients accumulated into `grads` scaled by `weight`.
inline double accumulate_dtw(const HybridPolicy& policy, const std::vector<Trajectory>& trajs,
                             const std::vector<Sequence>& real, const PpoConfig& cfg, double weight, Rng& rng,
                             PolicyGrads& grads) {
  const auto pairs = sample_pairs(trajs.size(), real.size(), static_cast<std::size_t>(cfg.dtw_pairs), rng);
  if (pairs.empty()) return 0.0;
  std::vector<std::size_t> used;
  for (const auto& pr : pairs) used.push_back(pr.first);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  double loss = 0.0;
  for (std::size_t a : used) {
    const auto& tr = trajs[a].transitions;
    std::vector<PolicyPass> passes;
    Sequence enc;
    passes.reserve(tr.size());
    for (const auto& t : tr) {
      passes.push_back(policy_forward(policy, t.state, false));
      enc.push_back(soft_encoding(policy.app, passes.back().probs, passes.back().means));
    }
    Sequence grad(enc.size(), std::vector<double>(enc.empty() ? 0 : enc.front().size(), 0.0));
    for (const auto& [pa, pr] : pairs) {
      if (pa != a) continue;
      const AlignmentStats s = soft_dtw(enc, real[pr], cfg.dtw_eta);
      loss += s.value;
      for (std::size_t i = 0; i < grad.size(); ++i)
        for (std::size_t k = 0; k < grad[i].size(); ++k) grad[i][k] += s.grad_p[i][k];
    }
    for (std::size_t i = 0; i < passes.size(); ++i) {
      std::vector<double> d_probs(passes[i].probs.size(), 0.0), d_means(passes[i].means.size(), 0.0);
      std::vector<double> d_enc(grad[i]);
      for (double& g : d_enc) g *= weight;
      soft_encoding_backward(policy.app, passes[i].probs, passes[i].means, d_enc, d_probs, d_means);
      policy_backward(policy, passes[i], d_probs, d_means, 0.0, grads);
    }
  }
  return loss;
}

/// PPO update over a batch of trajectories: the critic by its MSE loss,
/// both actors by L_dis + L_con + dtw_weight * L_DTW. Advantages are
/// normalized over the whole batch.
inline UpdateReport update_attacker(HybridPolicy& policy, AttackerOptimizer& opt, std::vector<Trajectory>& trajs,
                                    const std::vector<Sequence>& real, const PpoConfig& cfg, double sigma, Rng& rng) {
  UpdateReport report;
  if (trajs.empty()) throw UsageError("update_attacker: no trajectories");

  struct Sample {
    const Transition* tr;
    double advantage;
    double ret;
  };
  std::vector<Sample> batch;
  std::vector<double> adv;
  for (auto& traj : trajs) {
    estimate_advantages(traj, cfg.gamma, cfg.lam);
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
      batch.push_back({&traj.transitions[t], 0.0, traj.returns[t]});
      adv.push_back(traj.advantages[t]);
    }
  }
  normalize_advantages(adv);
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i].advantage = adv[i];

  const bool use_dtw = cfg.dtw_weight > 0.0 && !real.empty();
  const auto mb = static_cast<std::size_t>(cfg.minibatch);
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  PolicyGrads grads = policy.make_grads();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double critic_sum = 0.0, dis_sum = 0.0, con_sum = 0.0;
    int n_mb = 0;
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      const double n = static_cast<double>(end - start);
      grads.zero();
      double closs = 0.0, ldis = 0.0, lcon = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = batch[order[k]];
        const Transition& tr = *s.tr;
        const PolicyPass pass = policy_forward(policy, tr.state, true);
        const auto c = static_cast<std::size_t>(tr.discrete);

        std::vector<double> d_probs(pass.probs.size(), 0.0), d_means(pass.means.size(), 0.0);

        const double lp_dis = std::log(pass.probs[c]);
        const double rho_dis = std::exp(lp_dis - tr.logprob_dis);
        const double clip_dis = std::clamp(rho_dis, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        ldis -= std::min(rho_dis * s.advantage, clip_dis * s.advantage) / n;
        if (rho_dis * s.advantage <= clip_dis * s.advantage) {
          d_probs[c] = -rho_dis * s.advantage / n / pass.probs[c];
        }

        const auto slots = sampled_slots(policy.app, tr.discrete);
        if (!slots.empty()) {
          const double lp_con = continuous_logprob(policy.app, tr.discrete, pass.means, tr.raw, tr.raw2, sigma);
          const double rho_con = std::exp(lp_con - tr.logprob_con);
          const double clip_con = std::clamp(rho_con, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
          lcon -= std::min(rho_con * s.advantage, clip_con * s.advantage) / n;
          if (rho_con * s.advantage <= clip_con * s.advantage) {
            const double g = -rho_con * s.advantage / n;
            const double inv_var = 1.0 / (sigma * sigma);
            d_means[slots[0]] += g * (tr.raw - pass.means[slots[0]]) * inv_var;
            if (slots.size() > 1) d_means[slots[1]] += g * (tr.raw2 - pass.means[slots[1]]) * inv_var;
          }
        }

        const double diff = pass.value - s.ret;
        closs += diff * diff / n;
        policy_backward(policy, pass, d_probs, d_means, 2.0 * diff / n, grads);
      }
      if (use_dtw && start == 0) {
        report.loss_dtw = accumulate_dtw(policy, trajs, real, cfg, cfg.dtw_weight, rng, grads);
      }
      adam_step(policy.dis_embed, grads.dis_embed, cfg.lr_actor, opt.dis_embed);
      adam_step(policy.dis_actor, grads.dis_actor, cfg.lr_actor, opt.dis_actor);
      adam_step(policy.con_embed, grads.con_embed, cfg.lr_actor, opt.con_embed);
      adam_step(policy.con_actor, grads.con_actor, cfg.lr_actor, opt.con_actor);
      adam_step(policy.critic_embed, grads.critic_embed, cfg.lr_critic, opt.critic_embed);
      adam_step(policy.critic, grads.critic, cfg.lr_critic, opt.critic);
      report.optimizer_steps += 1;
      critic_sum += closs;
      dis_sum += ldis;
      con_sum += lcon;
      ++n_mb;
    }
    if (n_mb > 0) {
      report.critic_loss = critic_sum / n_mb;
      report.loss_dis = dis_sum / n_mb;
      report.loss_con = con_sum / n_mb;
    }
  }
  return report;
}

struct CycleReport {
  double mean_episode_reward = 0.0;
  double sigma = 0.0;
  UpdateReport update;
};

/// The counter-empirical attacker: policy, optimizer state and the
/// position in the sigma schedule.
class Attacker {
 public:
  Attacker() = default;
  Attacker(App app, PpoConfig cfg, Rng& init_rng)
      : cfg_(cfg), policy_(HybridPolicy::init(app, cfg, init_rng)), opt_(AttackerOptimizer::for_policy(policy_)) {
    cfg_.validate();
  }
  Attacker(HybridPolicy policy, PpoConfig cfg, int epoch)
      : cfg_(cfg), policy_(std::move(policy)), opt_(AttackerOptimizer::for_policy(policy_)), epoch_(epoch) {}

  const HybridPolicy& policy() const { return policy_; }
  HybridPolicy& policy() { return policy_; }
  const PpoConfig& config() const { return cfg_; }
  PpoConfig& config() { return cfg_; }
  int epoch() const { return epoch_; }
  double sigma() const { return cfg_.sigma.at(epoch_); }
  void reset_schedule() { epoch_ = 0; }

  /// One sampling round plus one PPO update; advances the sigma schedule.
  CycleReport train_cycle(const ScoringParams& phi, const EnvConfig& env_cfg, const std::vector<Sequence>& real,
                          Rng& rng) {
    CycleReport r;
    r.sigma = sigma();
    auto trajs = collect_trajectories(policy_, phi, env_cfg, cfg_.episodes_per_cycle, r.sigma, cfg_.action_scale, rng);
    double total = 0.0;
    for (const auto& t : trajs) total += t.total_reward();
    r.mean_episode_reward = trajs.empty() ? 0.0 : total / static_cast<double>(trajs.size());
    if (!trajs.empty()) r.update = update_attacker(policy_, opt_, trajs, real, cfg_, r.sigma, rng);
    ++epoch_;
    return r;
  }

  std::vector<Trajectory> rollout(const ScoringParams& phi, const EnvConfig& env_cfg, int episodes, Rng& rng) const {
    return collect_trajectories(policy_, phi, env_cfg, episodes, sigma(), cfg_.action_scale, rng);
  }

 private:
  PpoConfig cfg_;
  HybridPolicy policy_;
  AttackerOptimizer opt_;
  int epoch_ = 0;
};

}  // namespace advscore
