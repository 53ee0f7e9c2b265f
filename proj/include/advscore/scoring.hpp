#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advscore/common.hpp"

namespace advscore {

/// One activity record. For bank in-out, `amount` is the repaid part and
/// `amount2` the consumed part; `max_quota` is only meaningful for cloud.
struct ActionRecord {
  int action_type = 0;
  double amount = 0.0;
  double amount2 = 0.0;
  double max_quota = 1.0;

  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

struct History {
  std::vector<ActionRecord> records;  // oldest first
  std::size_t window = 30;

  /// The records a factor module reads: at most the last `window`.
  std::span<const ActionRecord> visible() const {
    const std::size_t n = std::min(records.size(), window);
    return std::span<const ActionRecord>(records).last(n);
  }
};

struct ModuleParams {
  double gamma = 0.5;
  double lambda = 0.1;

  friend bool operator==(const ModuleParams&, const ModuleParams&) = default;
};

/// Box constraints the enhancer keeps the parameters inside.
struct ParamBox {
  static constexpr double kWeightMin = 0.0;
  static constexpr double kWeightMax = 5.0;
  static constexpr double kGammaMin = 0.01;
  static constexpr double kGammaMax = 5.0;
  static constexpr double kLambdaMin = 0.0;
  static constexpr double kLambdaMax = 2.0;
};

struct ScoringParams {
  App app = App::Cloud;
  std::vector<double> weights;
  std::vector<ModuleParams> modules;

  friend bool operator==(const ScoringParams&, const ScoringParams&) = default;

  /// Uniform weights 1/K with every module at gamma=0.5, lambda=0.1.
  static ScoringParams uniform(App app) {
    const int k = module_count(app);
    ScoringParams p;
    p.app = app;
    p.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
    p.modules.assign(static_cast<std::size_t>(k), ModuleParams{});
    return p;
  }

  void validate() const {
    const auto k = static_cast<std::size_t>(module_count(app));
    if (weights.size() != k || modules.size() != k) {
      throw DataError("scoring params for " + std::string(app_name(app)) + " need " +
                      std::to_string(k) + " weights and modules");
    }
    for (const auto& m : modules) {
      if (!(m.gamma > 0.0) || !(m.lambda >= 0.0)) {
        throw DataError("module params need gamma > 0 and lambda >= 0");
      }
    }
    for (double w : weights) {
      if (!std::isfinite(w)) throw DataError("weights must be finite");
    }
  }
};

using ModuleVector = std::vector<double>;

struct ScoreResult {
  double score = 0.0;
  ModuleVector modules;
};

/// Value of one module together with its partial derivatives in gamma and
/// lambda. The derivatives are only filled when requested.
struct ModuleEval {
  double value = 0.0;
  double d_gamma = 0.0;
  double d_lambda = 0.0;
};

namespace detail {

inline constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

// tanh(y) for y >= 0, held inside [0, 1) when it rounds up to 1.
inline double squash_rising(double y) { return std::min(std::tanh(y), kBelowOne); }

// tanh(-y) + 1 for y >= 0, held inside (0, 1] when it underflows.
inline double squash_falling(double y) {
  const double v = 2.0 / (1.0 + std::exp(2.0 * y));
  return std::max(v, std::numeric_limits<double>::min());
}

inline double sech_squared(double y) {
  const double e = std::exp(-2.0 * std::abs(y));
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

enum class Aggregate { CountAverage, DecayAverage, DecaySum };

struct ModuleShape {
  Aggregate aggregate;
  bool rising;  // tanh(+gamma*A) rather than tanh(-gamma*A)+1
};

inline ModuleShape module_shape(App app, int module) {
  if (app == App::Cloud) {
    switch (module) {
      case cloud::kAskFactor: return {Aggregate::CountAverage, false};
      case cloud::kDeployFactor: return {Aggregate::CountAverage, true};
      case cloud::kUtilization: return {Aggregate::DecayAverage, true};
      case cloud::kAskFrequency: return {Aggregate::DecayAverage, false};
      case cloud::kDeployFrequency: return {Aggregate::DecayAverage, true};
      default: break;
    }
  } else {
    switch (module) {
      case bank::kRepayFactor: return {Aggregate::DecaySum, true};
      case bank::kConsumeFactor:
      case bank::kTradeOff:
      case bank::kWaitFactor: return {Aggregate::DecaySum, false};
      default: break;
    }
  }
  throw UsageError("module id " + std::to_string(module) + " does not exist for " +
                   std::string(app_name(app)));
}

// Per-record quantity the module aggregates, and whether the record belongs
// to the module's counting set (only used by CountAverage modules).
struct Contribution {
  double value;
  bool counted;
};

inline Contribution contribution(App app, int module, const ActionRecord& r) {
  if (app == App::Cloud) {
    switch (module) {
      case cloud::kAskFactor: return {r.action_type == cloud::kAsk ? r.amount : 0.0, r.action_type == cloud::kAsk};
      case cloud::kDeployFactor:
        return {r.action_type == cloud::kDeploy ? r.amount : 0.0, r.action_type == cloud::kDeploy};
      case cloud::kUtilization:
        return {r.action_type == cloud::kDeploy ? r.amount / r.max_quota : 0.0, true};
      case cloud::kAskFrequency: return {r.action_type == cloud::kAsk ? 1.0 : 0.0, true};
      case cloud::kDeployFrequency: return {r.action_type == cloud::kDeploy ? 1.0 : 0.0, true};
      default: break;
    }
  } else {
    switch (module) {
      case bank::kRepayFactor: return {r.action_type == bank::kRepay ? r.amount : 0.0, true};
      case bank::kConsumeFactor: return {r.action_type == bank::kConsume ? r.amount : 0.0, true};
      case bank::kTradeOff:
        return {r.action_type == bank::kInOut ? std::abs(r.amount2 / r.amount - 1.0) : 0.0, true};
      case bank::kWaitFactor: return {r.action_type == bank::kInactive ? 1.0 : 0.0, true};
      default: break;
    }
  }
  throw UsageError("module id " + std::to_string(module) + " does not exist for " +
                   std::string(app_name(app)));
}

inline void validate_record(App app, const ActionRecord& r) {
  if (r.action_type < 0 || r.action_type >= action_count(app)) {
    throw UsageError("record action " + std::to_string(r.action_type) + " is not valid for " +
                     std::string(app_name(app)));
  }
  if (!(r.amount >= 0.0) || !(r.amount2 >= 0.0)) throw UsageError("record amounts must be >= 0");
  if (app == App::Cloud && !(r.max_quota > 0.0)) throw UsageError("cloud records need max_quota > 0");
  if (app == App::Bank && r.action_type == bank::kInOut && !(r.amount > 0.0 && r.amount2 > 0.0)) {
    throw UsageError("bank in-out records need both amounts > 0");
  }
}

// decay[k] = exp(-lambda * k) for k = 0 .. window-1.
inline std::vector<double> decay_table(double lambda, std::size_t window) {
  std::vector<double> t(window);
  for (std::size_t k = 0; k < window; ++k) t[k] = std::exp(-lambda * static_cast<double>(k));
  return t;
}

inline ModuleEval evaluate_module(App app, int module, double gamma, std::span<const double> decay,
                                  std::span<const ActionRecord> records, bool derivatives) {
  const ModuleShape shape = module_shape(app, module);
  const std::size_t n = records.size();
  double num = 0.0, num_dl = 0.0, den = 0.0, den_dl = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t age = n - i - 1;
    const double w = decay[age];
    const Contribution c = contribution(app, module, records[i]);
    num += c.value * w;
    den += w;
    if (derivatives) {
      num_dl -= static_cast<double>(age) * c.value * w;
      den_dl -= static_cast<double>(age) * w;
    }
    if (c.counted) ++count;
  }

  // An empty denominator means no evidence: the inner aggregate is 0.
  double agg = 0.0, agg_dl = 0.0;
  switch (shape.aggregate) {
    case Aggregate::CountAverage:
      if (count > 0) {
        agg = num / static_cast<double>(count);
        agg_dl = num_dl / static_cast<double>(count);
      }
      break;
    case Aggregate::DecayAverage:
      if (den > 0.0) {
        agg = num / den;
        agg_dl = (num_dl * den - num * den_dl) / (den * den);
      }
      break;
    case Aggregate::DecaySum:
      agg = num;
      agg_dl = num_dl;
      break;
  }

  const double y = gamma * agg;
  ModuleEval out;
  out.value = shape.rising ? squash_rising(y) : squash_falling(y);
  if (derivatives) {
    const double sign = shape.rising ? 1.0 : -1.0;
    const double s2 = sech_squared(y);
    out.d_gamma = sign * agg * s2;
    out.d_lambda = sign * gamma * agg_dl * s2;
  }
  return out;
}

}  // namespace detail

/// Evaluates a single factor module on a history.
inline double eval_module(App app, int module_id, const ModuleParams& params, const History& history) {
  if (module_id < 0 || module_id >= module_count(app)) {
    throw UsageError("module id " + std::to_string(module_id) + " does not exist for " +
                     std::string(app_name(app)));
  }
  if (history.window == 0) throw UsageError("history window must be positive");
  const auto visible = history.visible();
  for (const auto& r : visible) detail::validate_record(app, r);
  const auto decay = detail::decay_table(params.lambda, history.window);
  return detail::evaluate_module(app, module_id, params.gamma, decay, visible, false).value;
}

/// Scoring function with decay tables precomputed for a fixed window, for
/// repeated evaluation under one parameter set.
class Scorer {
 public:
  Scorer(ScoringParams params, std::size_t window) : params_(std::move(params)), window_(window) {
    params_.validate();
    if (window_ == 0) throw UsageError("history window must be positive");
    decay_.reserve(params_.modules.size());
    for (const auto& m : params_.modules) decay_.push_back(detail::decay_table(m.lambda, window_));
  }

  const ScoringParams& params() const { return params_; }
  std::size_t window() const { return window_; }
  App app() const { return params_.app; }

  /// Scores the tail of `records` that falls inside the window.
  ScoreResult evaluate(std::span<const ActionRecord> records) const {
    const auto visible = records.last(std::min(records.size(), window_));
    for (const auto& r : visible) detail::validate_record(params_.app, r);
    ScoreResult out;
    const int k = module_count(params_.app);
    out.modules.resize(static_cast<std::size_t>(k));
    for (int m = 0; m < k; ++m) {
      const auto idx = static_cast<std::size_t>(m);
      out.modules[idx] =
          detail::evaluate_module(params_.app, m, params_.modules[idx].gamma, decay_[idx], visible, false).value;
      out.score += params_.weights[idx] * out.modules[idx];
    }
    return out;
  }

  /// Module values and their gamma/lambda partials on the visible tail.
  std::vector<ModuleEval> evaluate_with_derivatives(std::span<const ActionRecord> records) const {
    const auto visible = records.last(std::min(records.size(), window_));
    std::vector<ModuleEval> out;
    for (int m = 0; m < module_count(params_.app); ++m) {
      const auto idx = static_cast<std::size_t>(m);
      out.push_back(detail::evaluate_module(params_.app, m, params_.modules[idx].gamma, decay_[idx], visible, true));
    }
    return out;
  }

 private:
  ScoringParams params_;
  std::size_t window_;
  std::vector<std::vector<double>> decay_;
};

inline ScoreResult eval_score(const ScoringParams& phi, const History& history) {
  return Scorer(phi, history.window).evaluate(history.records);
}

inline ScoringParams uniform_params(App app) { return ScoringParams::uniform(app); }

/// Lower/upper bounds of a module value. `lower_open` / `upper_open` mark
/// excluded endpoints.
struct ModuleBounds {
  double lower;
  double upper;
  bool lower_open;
  bool upper_open;

  bool contains(double v) const {
    const bool lo = lower_open ? v > lower : v >= lower;
    const bool hi = upper_open ? v < upper : v <= upper;
    return lo && hi;
  }
};

inline ModuleBounds module_bounds(App app, int module) {
  const bool rising = detail::module_shape(app, module).rising;
  return rising ? ModuleBounds{0.0, 1.0, false, true} : ModuleBounds{0.0, 1.0, true, false};
}

}  // namespace advscore
