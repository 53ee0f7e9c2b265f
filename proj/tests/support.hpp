#pragma once

// Shared helpers for the test suites: random legal histories and a
// straight-line re-statement of every factor module, written without
// touching the library's scoring internals.

#include <cmath>
#include <random>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/scoring.hpp"

namespace oracle {

using advscore::ActionRecord;
using advscore::App;

inline double module(App app, int k, double gamma, double lambda, const std::vector<ActionRecord>& all,
                     std::size_t window) {
  const std::size_t start = all.size() > window ? all.size() - window : 0;
  std::vector<ActionRecord> h(all.begin() + static_cast<long>(start), all.end());
  const double n = static_cast<double>(h.size());
  double num = 0, den = 0, cnt = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double e = std::exp(-lambda * (n - static_cast<double>(i) - 1));
    const auto& r = h[i];
    if (app == App::Cloud) {
      switch (k) {
        case 0: if (r.action_type == 0) { num += r.amount * e; cnt += 1; } break;
        case 1: if (r.action_type == 1) { num += r.amount * e; cnt += 1; } break;
        case 2: num += (r.action_type == 1 ? r.amount / r.max_quota : 0.0) * e; den += e; break;
        case 3: num += (r.action_type == 0 ? 1.0 : 0.0) * e; den += e; break;
        case 4: num += (r.action_type == 1 ? 1.0 : 0.0) * e; den += e; break;
      }
    } else {
      switch (k) {
        case 0: if (r.action_type == 0) num += r.amount * e; break;
        case 1: if (r.action_type == 1) num += r.amount * e; break;
        case 2: if (r.action_type == 2) num += std::abs(r.amount2 / r.amount - 1.0) * e; break;
        case 3: if (r.action_type == 3) num += e; break;
      }
    }
  }
  if (app == App::Cloud) {
    const double a = (k <= 1) ? (cnt > 0 ? num / cnt : 0.0) : (den > 0 ? num / den : 0.0);
    const bool falling = k == 0 || k == 3;
    return falling ? std::tanh(-gamma * a) + 1.0 : std::tanh(gamma * a);
  }
  return k == 0 ? std::tanh(gamma * num) : std::tanh(-gamma * num) + 1.0;
}

inline double score(const advscore::ScoringParams& phi, const std::vector<ActionRecord>& h, std::size_t window) {
  double s = 0;
  for (std::size_t k = 0; k < phi.weights.size(); ++k) {
    s += phi.weights[k] * module(phi.app, static_cast<int>(k), phi.modules[k].gamma, phi.modules[k].lambda, h, window);
  }
  return s;
}

/// Random legal record; `scale` bounds the amounts.
inline ActionRecord random_record(App app, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ActionRecord r;
  r.action_type = static_cast<int>(rng() % static_cast<unsigned>(advscore::action_count(app)));
  const bool idle = advscore::is_idle_action(app, r.action_type);
  r.amount = idle ? 0.0 : scale * u(rng);
  if (app == App::Cloud) {
    r.max_quota = 0.5 + 2.0 * scale * u(rng);
  } else if (r.action_type == 2) {
    r.amount = 0.01 + scale * u(rng);
    r.amount2 = 0.01 + scale * u(rng);
  }
  return r;
}

inline std::vector<ActionRecord> random_history(App app, std::mt19937_64& rng, std::size_t max_len, double scale) {
  const std::size_t n = rng() % (max_len + 1);
  std::vector<ActionRecord> h;
  for (std::size_t i = 0; i < n; ++i) h.push_back(random_record(app, rng, scale));
  return h;
}

inline advscore::ScoringParams random_params(App app, std::mt19937_64& rng, double gmax = 1.0, double lmax = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto p = advscore::ScoringParams::uniform(app);
  for (auto& w : p.weights) w = 2.0 * u(rng);
  for (auto& m : p.modules) {
    m.gamma = 0.01 + gmax * u(rng);
    m.lambda = lmax * u(rng);
  }
  return p;
}

}  // namespace oracle
