#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/environment.hpp"
#include "advscore/scoring.hpp"

namespace advscore {

/// Attacker action sequences with everything else stripped: states and
/// rewards are recomputed under whatever Phi is being evaluated.
struct FrozenCorpus {
  App app = App::Cloud;
  std::vector<std::vector<HybridAction>> trajectories;

  bool empty() const { return trajectories.empty(); }
  friend bool operator==(const FrozenCorpus&, const FrozenCorpus&) = default;
};

/// Per-step replay result, shared by the enhancer and by evaluation code.
struct ReplayStep {
  ActionRecord prev;
  ActionRecord record;
  double score_prev = 0.0;
  double score = 0.0;
  double reward = 0.0;
};

/// Replays one action sequence through a fresh environment under `phi`.
inline std::vector<ReplayStep> replay(const ScoringParams& phi, const std::vector<HybridAction>& actions,
                                      EnvConfig env_cfg) {
  env_cfg.max_episode_len = std::max<int>(1, static_cast<int>(actions.size()));
  Environment env(env_cfg, phi);
  std::vector<ReplayStep> out;
  out.reserve(actions.size());
  ActionRecord prev = idle_record(env_cfg.app);
  for (const auto& a : actions) {
    ReplayStep s;
    s.prev = prev;
    s.score_prev = env.state().score;
    const StepOutcome o = env.step(a);
    s.record = o.record;
    s.score = o.state.score;
    s.reward = o.reward;
    prev = o.record;
    out.push_back(s);
  }
  return out;
}

/// Undiscounted total attacker reward over the corpus under `phi`. This is
/// the enhancer's loss and also the attacker's summed reward: both come
/// from Environment::step.
inline double cumulative_reward(const ScoringParams& phi, const FrozenCorpus& corpus, const EnvConfig& env_cfg) {
  if (phi.app != corpus.app) throw UsageError("corpus and scoring params disagree on app");
  double total = 0.0;
  for (const auto& traj : corpus.trajectories) {
    if (traj.empty()) continue;
    for (const auto& s : replay(phi, traj, env_cfg)) total += s.reward;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Flat parameter view: [w_1..w_K, gamma_1..gamma_K, lambda_1..lambda_K]

inline std::vector<double> flatten(const ScoringParams& phi) {
  std::vector<double> x(phi.weights);
  for (const auto& m : phi.modules) x.push_back(m.gamma);
  for (const auto& m : phi.modules) x.push_back(m.lambda);
  return x;
}

inline ScoringParams unflatten(App app, const std::vector<double>& x) {
  const auto k = static_cast<std::size_t>(module_count(app));
  if (x.size() != 3 * k) throw UsageError("flat parameter vector has the wrong length");
  ScoringParams p;
  p.app = app;
  p.weights.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k));
  p.modules.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    p.modules[i].gamma = x[k + i];
    p.modules[i].lambda = x[2 * k + i];
  }
  return p;
}

inline std::pair<double, double> coordinate_bounds(App app, std::size_t index) {
  const auto k = static_cast<std::size_t>(module_count(app));
  if (index < k) return {ParamBox::kWeightMin, ParamBox::kWeightMax};
  if (index < 2 * k) return {ParamBox::kGammaMin, ParamBox::kGammaMax};
  return {ParamBox::kLambdaMin, ParamBox::kLambdaMax};
}

inline ScoringParams clamp_to_box(const ScoringParams& phi) {
  auto x = flatten(phi);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto [lo, hi] = coordinate_bounds(phi.app, i);
    x[i] = std::clamp(x[i], lo, hi);
  }
  return unflatten(phi.app, x);
}

/// Finite-difference gradient of cumulative_reward in flat order. Central
/// differences, one-sided where a step of h would leave the box.
inline std::vector<double> grad_phi(const ScoringParams& phi, const FrozenCorpus& corpus, const EnvConfig& env_cfg,
                                    double h = 1e-4) {
  if (!(h > 0.0)) throw UsageError("grad_phi: h must be positive");
  const auto x = flatten(phi);
  std::vector<double> g(x.size(), 0.0);
  if (corpus.empty()) return g;
  auto eval_at = [&](std::size_t i, double v) {
    auto y = x;
    y[i] = v;
    return cumulative_reward(unflatten(phi.app, y), corpus, env_cfg);
  };
  double base = 0.0;
  bool have_base = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto [lo, hi] = coordinate_bounds(phi.app, i);
    const bool can_down = x[i] - h >= lo;
    const bool can_up = x[i] + h <= hi;
    if (can_down && can_up) {
      g[i] = (eval_at(i, x[i] + h) - eval_at(i, x[i] - h)) / (2.0 * h);
      continue;
    }
    if (!have_base) {
      base = cumulative_reward(phi, corpus, env_cfg);
      have_base = true;
    }
    if (can_up) {
      g[i] = (eval_at(i, x[i] + h) - base) / h;
    } else if (can_down) {
      g[i] = (base - eval_at(i, x[i] - h)) / h;
    }
  }
  return g;
}

/// Gradient of cumulative_reward with every reward branch held fixed at
/// its value under `phi`; exact away from branch switches and |ds| kinks.
inline std::vector<double> frozen_branch_gradient(const ScoringParams& phi, const FrozenCorpus& corpus,
                                                  const EnvConfig& env_cfg) {
  const auto k = static_cast<std::size_t>(module_count(phi.app));
  std::vector<double> g(3 * k, 0.0);
  const Scorer scorer(phi, env_cfg.window);

  // d s / d x for the history ending at `records`.
  auto score_grad = [&](std::span<const ActionRecord> records) {
    std::vector<double> d(3 * k, 0.0);
    const auto evals = scorer.evaluate_with_derivatives(records);
    for (std::size_t m = 0; m < k; ++m) {
      d[m] = evals[m].value;
      d[k + m] = phi.weights[m] * evals[m].d_gamma;
      d[2 * k + m] = phi.weights[m] * evals[m].d_lambda;
    }
    return d;
  };

  for (const auto& traj : corpus.trajectories) {
    if (traj.empty()) continue;
    const auto steps = replay(phi, traj, env_cfg);
    std::vector<ActionRecord> records;
    std::vector<double> d_prev = score_grad(records);
    for (const auto& st : steps) {
      records.push_back(st.record);
      const std::vector<double> d_curr = score_grad(records);
      const double ds = st.score - st.score_prev;
      // Slope of the reward in |ds| on the active branch.
      double slope = 0.0;
      if (phi.app == App::Cloud) {
        switch (classify_cloud(st.prev, st.record, st.score_prev, st.score)) {
          case CloudBranch::kDeployUpScoreDown:
          case CloudBranch::kDeployHeldScoreUp:
          case CloudBranch::kAskScoreUp: slope = 1.1; break;
          default: break;
        }
      } else {
        switch (classify_bank(st.record, st.score_prev, st.score)) {
          case BankBranch::kRepayScoreUp: slope = -st.record.amount; break;
          case BankBranch::kRepayScoreDown: slope = st.record.amount; break;
          case BankBranch::kConsumeScoreUp: slope = st.record.amount; break;
          case BankBranch::kConsumeScoreDown: slope = -st.record.amount; break;
          case BankBranch::kInOutScoreUp: slope = trade_imbalance(st.record); break;
          case BankBranch::kInOutScoreDown: slope = -trade_imbalance(st.record); break;
          default: break;
        }
      }
      const double sign = ds > 0.0 ? 1.0 : (ds < 0.0 ? -1.0 : 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += slope * sign * (d_curr[i] - d_prev[i]);
      d_prev = d_curr;
    }
  }
  return g;
}

struct EnhanceConfig {
  double lr = 1e-3;
  int max_iters = 50;
  double tol = 1e-6;
  double fd_step = 1e-4;
  int max_halvings = 20;

  void validate() const {
    if (!(lr > 0.0) || max_iters < 0 || !(tol >= 0.0) || !(fd_step > 0.0) || max_halvings < 0) {
      throw UsageError("invalid enhancer settings");
    }
  }
};

struct EnhanceResult {
  ScoringParams phi;
  std::vector<double> loss_curve;  // R before the first step, then after each accepted step
  int iterations = 0;
};

/// Gradient descent on cumulative_reward with box clamping. A step that
/// raises the loss is retried at half length; if no halving helps the
/// descent stops where it is.
inline EnhanceResult enhance(const ScoringParams& phi, const FrozenCorpus& corpus, const EnvConfig& env_cfg,
                             const EnhanceConfig& cfg = {}) {
  cfg.validate();
  EnhanceResult out;
  out.phi = clamp_to_box(phi);
  double loss = cumulative_reward(out.phi, corpus, env_cfg);
  out.loss_curve.push_back(loss);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto g = grad_phi(out.phi, corpus, env_cfg, cfg.fd_step);
    if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) break;
    const auto x = flatten(out.phi);
    double step = cfg.lr;
    bool accepted = false;
    ScoringParams candidate;
    double cand_loss = loss;
    for (int h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
      auto y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y[i] -= step * g[i];
      candidate = clamp_to_box(unflatten(out.phi.app, y));
      cand_loss = cumulative_reward(candidate, corpus, env_cfg);
      if (cand_loss <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double change = loss - cand_loss;
    out.phi = candidate;
    loss = cand_loss;
    out.loss_curve.push_back(loss);
    out.iterations = it + 1;
    if (change < cfg.tol) break;
  }
  return out;
}

}  // namespace advscore
