#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "advscore/common.hpp"
#include "advscore/environment.hpp"
#include "advscore/rng.hpp"

namespace advscore {

/// Time series of equal-width real vectors, one per step.
using Sequence = std::vector<std::vector<double>>;

struct AlignmentStats {
  double value = 0.0;
  std::size_t rows = 0;  // n, length of p
  std::size_t cols = 0;  // m, length of q
  std::vector<double> expected_alignment;  // rows x cols, row-major
  Sequence grad_p;

  double alignment(std::size_t i, std::size_t j) const { return expected_alignment[i * cols + j]; }
};

/// One-hot slot encoding of a hybrid action, magnitudes divided by `scale`.
/// Bank in-out writes the repaid part to its own slot and the consumed part
/// to the extra in-out slot. Idle actions encode as the zero vector.
inline std::vector<double> encode_action(App app, const HybridAction& a, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(slot_count(app)), 0.0);
  if (a.discrete < 0 || a.discrete >= action_count(app)) throw UsageError("encode_action: invalid discrete action");
  if (is_idle_action(app, a.discrete)) return v;
  v[static_cast<std::size_t>(a.discrete)] = a.continuous / scale;
  if (app == App::Bank && a.discrete == bank::kInOut) v[bank::kInOutConsumeSlot] = a.continuous2 / scale;
  return v;
}

inline Sequence encode_actions(App app, const std::vector<HybridAction>& actions, double scale = 1.0) {
  Sequence s;
  s.reserve(actions.size());
  for (const auto& a : actions) s.push_back(encode_action(app, a, scale));
  return s;
}

namespace detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

inline double softmin3(double a, double b, double c, double gamma) {
  const double inf = std::numeric_limits<double>::infinity();
  const double lo = std::min({a, b, c});
  if (lo == inf) return inf;
  const double sum = std::exp(-(a - lo) / gamma) + std::exp(-(b - lo) / gamma) + std::exp(-(c - lo) / gamma);
  return lo - gamma * std::log(sum);
}

}  // namespace detail

/// Soft-DTW with squared Euclidean cost: value, expected alignment matrix
/// and the gradient of the value with respect to every vector of `p`.
inline AlignmentStats soft_dtw(const Sequence& p, const Sequence& q, double gamma) {
  if (!(gamma > 0.0)) throw UsageError("soft_dtw: gamma must be positive");
  if (p.empty() || q.empty()) throw UsageError("soft_dtw: sequences must be nonempty");
  const std::size_t dim = p.front().size();
  for (const auto& v : p) if (v.size() != dim) throw UsageError("soft_dtw: ragged sequence p");
  for (const auto& v : q) if (v.size() != dim) throw UsageError("soft_dtw: ragged sequence q");

  const std::size_t n = p.size(), m = q.size();
  const std::size_t w = m + 2;
  const double inf = std::numeric_limits<double>::infinity();

  // Cost and accumulated-cost tables with a one-cell border on each side.
  std::vector<double> cost((n + 2) * w, 0.0);
  std::vector<double> acc((n + 2) * w, inf);
  auto at = [w](std::size_t i, std::size_t j) { return i * w + j; };
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) cost[at(i, j)] = detail::squared_distance(p[i - 1], q[j - 1]);

  acc[at(0, 0)] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      acc[at(i, j)] = cost[at(i, j)] + detail::softmin3(acc[at(i - 1, j - 1)], acc[at(i - 1, j)], acc[at(i, j - 1)], gamma);
    }
  }

  AlignmentStats out;
  out.value = acc[at(n, m)];
  out.rows = n;
  out.cols = m;

  // Backward recursion for E[H].
  for (std::size_t i = 1; i <= n; ++i) acc[at(i, m + 1)] = -inf;
  for (std::size_t j = 1; j <= m; ++j) acc[at(n + 1, j)] = -inf;
  acc[at(n + 1, m + 1)] = acc[at(n, m)];
  std::vector<double> e((n + 2) * w, 0.0);
  e[at(n + 1, m + 1)] = 1.0;
  for (std::size_t j = m; j >= 1; --j) {
    for (std::size_t i = n; i >= 1; --i) {
      const double r = acc[at(i, j)];
      const double a = std::exp((acc[at(i + 1, j)] - r - cost[at(i + 1, j)]) / gamma);
      const double b = std::exp((acc[at(i, j + 1)] - r - cost[at(i, j + 1)]) / gamma);
      const double c = std::exp((acc[at(i + 1, j + 1)] - r - cost[at(i + 1, j + 1)]) / gamma);
      e[at(i, j)] = e[at(i + 1, j)] * a + e[at(i, j + 1)] * b + e[at(i + 1, j + 1)] * c;
    }
  }

  out.expected_alignment.resize(n * m);
  out.grad_p.assign(n, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double eij = e[at(i + 1, j + 1)];
      out.expected_alignment[i * m + j] = eij;
      for (std::size_t k = 0; k < dim; ++k) out.grad_p[i][k] += eij * 2.0 * (p[i][k] - q[j][k]);
    }
  }
  return out;
}

struct DtwRegularization {
  double loss = 0.0;
  std::vector<Sequence> grads;  // one per attacker sequence, zero when unsampled
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// (attacker, real) index pairs: the full cross product when it fits in
/// `budget`, otherwise `budget` pairs drawn with replacement.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n_attacker, std::size_t n_real,
                                                                     std::size_t budget, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n_attacker == 0 || n_real == 0 || budget == 0) return pairs;
  if (n_attacker * n_real <= budget) {
    for (std::size_t a = 0; a < n_attacker; ++a)
      for (std::size_t r = 0; r < n_real; ++r) pairs.emplace_back(a, r);
    return pairs;
  }
  std::uniform_int_distribution<std::size_t> pick_a(0, n_attacker - 1);
  std::uniform_int_distribution<std::size_t> pick_r(0, n_real - 1);
  for (std::size_t k = 0; k < budget; ++k) {
    const std::size_t a = pick_a(rng);
    pairs.emplace_back(a, pick_r(rng));
  }
  return pairs;
}

/// Sum of soft-DTW values over sampled (attacker, real) pairs, with the
/// gradient of that sum for every attacker sequence. An empty real set
/// gives zero loss and zero gradients.
inline DtwRegularization dtw_regularizer(const std::vector<Sequence>& attacker, const std::vector<Sequence>& real,
                                         double eta, std::size_t pair_budget, Rng& rng) {
  if (!(eta > 0.0)) throw UsageError("dtw_regularizer: eta must be positive");
  DtwRegularization out;
  out.grads.reserve(attacker.size());
  for (const auto& s : attacker) out.grads.emplace_back(s.size(), std::vector<double>(s.empty() ? 0 : s.front().size(), 0.0));
  out.pairs = sample_pairs(attacker.size(), real.size(), pair_budget, rng);
  for (const auto& [a, r] : out.pairs) {
    const AlignmentStats s = soft_dtw(attacker[a], real[r], eta);
    out.loss += s.value;
    for (std::size_t i = 0; i < s.grad_p.size(); ++i)
      for (std::size_t k = 0; k < s.grad_p[i].size(); ++k) out.grads[a][i][k] += s.grad_p[i][k];
  }
  return out;
}

}  // namespace advscore
