#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/scoring.hpp"

namespace advscore {

/// A discrete action type with its magnitudes. `continuous2` is only read
/// for bank in-out, where `continuous` is the repaid amount and
/// `continuous2` the consumed amount.
struct HybridAction {
  int discrete = 0;
  double continuous = 0.0;
  double continuous2 = 0.0;

  friend bool operator==(const HybridAction&, const HybridAction&) = default;
};

struct EnvConfig {
  App app = App::Cloud;
  std::size_t window = 30;
  int max_episode_len = 100;
  double capacity = 100.0;        // cloud
  double initial_quota = 10.0;    // cloud
  double credit_limit = 100.0;    // bank
  double min_inout_amount = 0.01; // bank in-out keeps both halves above this

  static EnvConfig defaults(App app) {
    EnvConfig c;
    c.app = app;
    return c;
  }

  void validate() const {
    if (window == 0) throw UsageError("window must be positive");
    if (max_episode_len <= 0) throw UsageError("max_episode_len must be positive");
    if (!(initial_quota > 0.0) || !(capacity >= initial_quota)) {
      throw UsageError("cloud needs 0 < initial_quota <= capacity");
    }
    if (!(credit_limit > 0.0) || !(min_inout_amount > 0.0)) {
      throw UsageError("bank needs positive credit_limit and min_inout_amount");
    }
  }
};

/// Account state: cloud uses quota/deployed, bank uses debt/credit_limit.
struct Ledger {
  double quota = 0.0;
  double deployed = 0.0;
  double debt = 0.0;
  double credit_limit = 0.0;

  friend bool operator==(const Ledger&, const Ledger&) = default;
};

struct EnvState {
  ModuleVector modules;
  double score = 0.0;
  int step_index = 0;
  Ledger ledger;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

enum class Criterion : int {
  kCloudDeployMore = 0,   // deploying more must raise the score
  kCloudDeployNotMore,    // deploying no more must lower the score
  kCloudAsk,              // asking for quota must lower the score
  kBankRepay,             // repaying must raise the score
  kBankConsume,           // consuming must not raise the score
  kBankInOut,             // an unbalanced in-out must not raise the score
};

inline std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kCloudDeployMore: return "deploy_more";
    case Criterion::kCloudDeployNotMore: return "deploy_not_more";
    case Criterion::kCloudAsk: return "ask";
    case Criterion::kBankRepay: return "repay";
    case Criterion::kBankConsume: return "consume";
    case Criterion::kBankInOut: return "in_out";
  }
  return "unknown";
}

/// A counter case: the activity pair is ordered but the score moved the
/// wrong way. `severity` is |delta s|; `factor` is the branch multiplier
/// so the attacker reward equals factor * severity.
struct Violation {
  Criterion criterion;
  double severity;
  double factor;
};

struct StepOutcome {
  EnvState state;
  ActionRecord record;
  double reward = 0.0;
  bool done = false;
  std::optional<Violation> violation;
};

// ---------------------------------------------------------------------------
// Reward tables

enum class CloudBranch {
  kDeployUpScoreUp,      // -0.01
  kDeployUpScoreDown,    // 1.1 |ds|
  kDeployHeldScoreDown,  // -0.02
  kDeployHeldScoreUp,    // 1.1 |ds|
  kAskScoreDown,         // -0.06
  kAskScoreUp,           // 1.1 |ds|
  kOtherwise,            // 0
};

enum class BankBranch {
  kRepayScoreUp,      // -q_rep |ds|
  kRepayScoreDown,    // q_rep |ds|
  kConsumeScoreUp,    // q_con |ds|
  kConsumeScoreDown,  // -q_con |ds|
  kInOutScoreUp,      // |q_con/q_rep - 1| |ds|
  kInOutScoreDown,    // -|q_con/q_rep - 1| |ds|
  kOtherwise,         // 0
};

inline double deployed_amount(const ActionRecord& r) {
  return r.action_type == cloud::kDeploy ? r.amount : 0.0;
}

/// The row group is picked by the current action: deploys compare their
/// amount with the previous record's deployed amount, asks use the ask
/// rows, anything else pays 0. Equal scores fall on the side the printed
/// inequalities put them.
inline CloudBranch classify_cloud(const ActionRecord& prev, const ActionRecord& curr, double s_prev,
                                  double s_curr) {
  if (curr.action_type == cloud::kDeploy) {
    if (deployed_amount(curr) > deployed_amount(prev)) {
      return s_curr > s_prev ? CloudBranch::kDeployUpScoreUp : CloudBranch::kDeployUpScoreDown;
    }
    return s_curr < s_prev ? CloudBranch::kDeployHeldScoreDown : CloudBranch::kDeployHeldScoreUp;
  }
  if (curr.action_type == cloud::kAsk && curr.amount > 0.0) {
    return s_curr < s_prev ? CloudBranch::kAskScoreDown : CloudBranch::kAskScoreUp;
  }
  return CloudBranch::kOtherwise;
}

inline double reward_cloud(const ActionRecord& prev, const ActionRecord& curr, double s_prev, double s_curr) {
  const double gap = std::abs(s_curr - s_prev);
  switch (classify_cloud(prev, curr, s_prev, s_curr)) {
    case CloudBranch::kDeployUpScoreUp: return -0.01;
    case CloudBranch::kDeployUpScoreDown: return 1.1 * gap;
    case CloudBranch::kDeployHeldScoreDown: return -0.02;
    case CloudBranch::kDeployHeldScoreUp: return 1.1 * gap;
    case CloudBranch::kAskScoreDown: return -0.06;
    case CloudBranch::kAskScoreUp: return 1.1 * gap;
    case CloudBranch::kOtherwise: return 0.0;
  }
  return 0.0;
}

inline BankBranch classify_bank(const ActionRecord& curr, double s_prev, double s_curr) {
  const bool rose = s_curr > s_prev;
  switch (curr.action_type) {
    case bank::kRepay: return rose ? BankBranch::kRepayScoreUp : BankBranch::kRepayScoreDown;
    case bank::kConsume: return rose ? BankBranch::kConsumeScoreUp : BankBranch::kConsumeScoreDown;
    case bank::kInOut: return rose ? BankBranch::kInOutScoreUp : BankBranch::kInOutScoreDown;
    default: return BankBranch::kOtherwise;
  }
}

inline double trade_imbalance(const ActionRecord& r) { return std::abs(r.amount2 / r.amount - 1.0); }

inline double reward_bank(const ActionRecord& curr, double s_prev, double s_curr) {
  const double gap = std::abs(s_curr - s_prev);
  switch (classify_bank(curr, s_prev, s_curr)) {
    case BankBranch::kRepayScoreUp: return -curr.amount * gap;
    case BankBranch::kRepayScoreDown: return curr.amount * gap;
    case BankBranch::kConsumeScoreUp: return curr.amount * gap;
    case BankBranch::kConsumeScoreDown: return -curr.amount * gap;
    case BankBranch::kInOutScoreUp: return trade_imbalance(curr) * gap;
    case BankBranch::kInOutScoreDown: return -trade_imbalance(curr) * gap;
    case BankBranch::kOtherwise: return 0.0;
  }
  return 0.0;
}

/// Empirical criteria registered for an app. These are the rows of the
/// reward tables that pay the attacker.
struct CriterionSet {
  App app;
  std::vector<Criterion> criteria;

  static CriterionSet for_app(App app) {
    if (app == App::Cloud) {
      return {app, {Criterion::kCloudDeployMore, Criterion::kCloudDeployNotMore, Criterion::kCloudAsk}};
    }
    return {app, {Criterion::kBankRepay, Criterion::kBankConsume, Criterion::kBankInOut}};
  }

  bool contains(Criterion c) const { return std::find(criteria.begin(), criteria.end(), c) != criteria.end(); }
};

inline std::optional<Violation> check_violation(const CriterionSet& set, const ActionRecord& prev,
                                                const ActionRecord& curr, double s_prev, double s_curr) {
  const double gap = std::abs(s_curr - s_prev);
  std::optional<Violation> v;
  if (set.app == App::Cloud) {
    switch (classify_cloud(prev, curr, s_prev, s_curr)) {
      case CloudBranch::kDeployUpScoreDown: v = Violation{Criterion::kCloudDeployMore, gap, 1.1}; break;
      case CloudBranch::kDeployHeldScoreUp: v = Violation{Criterion::kCloudDeployNotMore, gap, 1.1}; break;
      case CloudBranch::kAskScoreUp: v = Violation{Criterion::kCloudAsk, gap, 1.1}; break;
      default: break;
    }
  } else {
    switch (classify_bank(curr, s_prev, s_curr)) {
      case BankBranch::kRepayScoreDown: v = Violation{Criterion::kBankRepay, gap, curr.amount}; break;
      case BankBranch::kConsumeScoreUp: v = Violation{Criterion::kBankConsume, gap, curr.amount}; break;
      case BankBranch::kInOutScoreUp: v = Violation{Criterion::kBankInOut, gap, trade_imbalance(curr)}; break;
      default: break;
    }
  }
  // A counter case needs a nonzero severity-weighted gap.
  if (v && (!set.contains(v->criterion) || !(v->factor * v->severity > 0.0))) v.reset();
  return v;
}

// ---------------------------------------------------------------------------
// Action legality

inline double clamp_amount(double x, double lo, double hi) {
  if (!(x == x)) return lo;  // NaN
  return std::clamp(x, lo, std::max(lo, hi));
}

/// Projects a raw action onto the legal set for the current ledger. Never
/// rejects: magnitudes are clamped and negatives become 0.
inline HybridAction clamp_action(const EnvConfig& cfg, const HybridAction& raw, const Ledger& ledger) {
  if (raw.discrete < 0 || raw.discrete >= action_count(cfg.app)) {
    throw UsageError("discrete action " + std::to_string(raw.discrete) + " is not valid for " +
                     std::string(app_name(cfg.app)));
  }
  HybridAction a{raw.discrete, 0.0, 0.0};
  if (cfg.app == App::Cloud) {
    switch (raw.discrete) {
      case cloud::kAsk: a.continuous = clamp_amount(raw.continuous, 0.0, cfg.capacity - ledger.quota); break;
      case cloud::kDeploy: a.continuous = clamp_amount(raw.continuous, 0.0, ledger.quota); break;
      default: break;
    }
    return a;
  }
  const double debt = ledger.debt;
  const double limit = ledger.credit_limit;
  switch (raw.discrete) {
    case bank::kRepay: a.continuous = clamp_amount(raw.continuous, 0.0, debt); break;
    case bank::kConsume: a.continuous = clamp_amount(raw.continuous, 0.0, limit - debt); break;
    case bank::kInOut: {
      // Both halves happen in the same period: repay up to the debt after
      // consuming, consume up to the headroom after repaying.
      const double floor = cfg.min_inout_amount;
      double consume = clamp_amount(raw.continuous2, floor, std::numeric_limits<double>::max());
      double repay = clamp_amount(raw.continuous, floor, debt + consume);
      consume = std::min(consume, limit - debt + repay);
      a.continuous = repay;
      a.continuous2 = consume;
      break;
    }
    default: break;
  }
  return a;
}

inline ActionRecord idle_record(App app) {
  ActionRecord r;
  r.action_type = app == App::Cloud ? int{cloud::kWait} : int{bank::kInactive};
  return r;
}

/// One user's MDP. The scoring parameters are fixed for the lifetime of
/// the instance; reset() starts a fresh episode.
class Environment {
 public:
  Environment(EnvConfig cfg, const ScoringParams& phi)
      : cfg_(cfg), scorer_(phi, cfg.window), criteria_(CriterionSet::for_app(cfg.app)) {
    cfg_.validate();
    if (phi.app != cfg_.app) throw UsageError("scoring params and environment disagree on app");
    reset(0);
  }

  const EnvConfig& config() const { return cfg_; }
  const Scorer& scorer() const { return scorer_; }
  const EnvState& state() const { return state_; }
  const History& history() const { return history_; }
  std::uint64_t seed() const { return seed_; }

  const EnvState& reset(std::uint64_t seed) {
    seed_ = seed;
    history_ = History{{}, cfg_.window};
    history_.records.reserve(static_cast<std::size_t>(cfg_.max_episode_len));
    state_ = EnvState{};
    state_.ledger.quota = cfg_.app == App::Cloud ? cfg_.initial_quota : 0.0;
    state_.ledger.credit_limit = cfg_.app == App::Bank ? cfg_.credit_limit : 0.0;
    const ScoreResult s = scorer_.evaluate(history_.records);
    state_.score = s.score;
    state_.modules = s.modules;
    return state_;
  }

  StepOutcome step(const HybridAction& raw) {
    if (state_.step_index >= cfg_.max_episode_len) throw UsageError("step() called after the episode ended");
    const HybridAction a = clamp_action(cfg_, raw, state_.ledger);
    const ActionRecord prev = history_.records.empty() ? idle_record(cfg_.app) : history_.records.back();

    ActionRecord rec;
    rec.action_type = a.discrete;
    Ledger& ledger = state_.ledger;
    if (cfg_.app == App::Cloud) {
      if (a.discrete == cloud::kAsk) ledger.quota += a.continuous;
      if (a.discrete == cloud::kDeploy) ledger.deployed = a.continuous;
      rec.amount = a.continuous;
      rec.max_quota = ledger.quota;
    } else {
      switch (a.discrete) {
        case bank::kRepay: ledger.debt -= a.continuous; break;
        case bank::kConsume: ledger.debt += a.continuous; break;
        case bank::kInOut: ledger.debt += a.continuous2 - a.continuous; break;
        default: break;
      }
      ledger.debt = std::clamp(ledger.debt, 0.0, ledger.credit_limit);
      rec.amount = a.continuous;
      rec.amount2 = a.discrete == bank::kInOut ? a.continuous2 : 0.0;
    }
    history_.records.push_back(rec);

    const double s_prev = state_.score;
    const ScoreResult s = scorer_.evaluate(history_.records);
    state_.score = s.score;
    state_.modules = s.modules;
    state_.step_index += 1;

    StepOutcome out;
    out.record = rec;
    out.reward = cfg_.app == App::Cloud ? reward_cloud(prev, rec, s_prev, s.score) : reward_bank(rec, s_prev, s.score);
    out.violation = check_violation(criteria_, prev, rec, s_prev, s.score);
    out.done = state_.step_index >= cfg_.max_episode_len;
    out.state = state_;
    return out;
  }

 private:
  EnvConfig cfg_;
  Scorer scorer_;
  CriterionSet criteria_;
  History history_;
  EnvState state_;
  std::uint64_t seed_ = 0;
};

}  // namespace advscore
