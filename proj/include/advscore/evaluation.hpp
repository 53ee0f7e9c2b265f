#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "advscore/adversarial.hpp"
#include "advscore/attacker.hpp"
#include "advscore/environment.hpp"
#include "advscore/io.hpp"
#include "advscore/rng.hpp"
#include "advscore/scoring.hpp"

namespace advscore {

/// Mean undiscounted episode reward of `attacker` against `phi`.
inline double evaluate_attacker(const Attacker& attacker, const ScoringParams& phi, const EnvConfig& env_cfg,
                                int episodes, Rng& rng) {
  if (episodes <= 0) throw UsageError("evaluation needs at least one episode");
  const auto trajs = attacker.rollout(phi, env_cfg, episodes, rng);
  double total = 0.0;
  for (const auto& t : trajs) total += t.total_reward();
  return total / static_cast<double>(episodes);
}

// ---------------------------------------------------------------------------
// Competition ratio

/// r^a / r^b. Zero on both sides means neither player moved the other,
/// which is read as 1; x / 0 with x != 0 is undefined.
inline std::optional<double> ratio_of(double before, double after) {
  if (after == 0.0) return before == 0.0 ? std::optional<double>(1.0) : std::nullopt;
  return before / after;
}

struct RatioStats {
  std::vector<double> before;                // r^a per repeat
  std::vector<double> after;                 // r^b per repeat
  std::vector<std::optional<double>> ratio;  // r^a / r^b, empty when undefined
  std::optional<double> mean;
  std::optional<double> variance;
};

/// r^a on phi_before and r^b on phi_after for the round's attacker, each on
/// its own trajectory corpus, repeated `repeats` times.
inline RatioStats competition_ratio(const RoundArtifact& art, const EnvConfig& env_cfg, int episodes,
                                    std::uint64_t seed, int repeats = 3) {
  if (repeats <= 0) throw UsageError("competition ratio needs at least one repeat");
  const Attacker attacker = attacker_from_json(art.theta);
  RatioStats s;
  std::vector<double> defined;
  for (int r = 0; r < repeats; ++r) {
    const auto idx = static_cast<std::uint64_t>(art.round) * 1000 + static_cast<std::uint64_t>(r);
    Rng ra = make_stream(seed, "ratio-before", idx);
    Rng rb = make_stream(seed, "ratio-after", idx);
    s.before.push_back(evaluate_attacker(attacker, art.phi_before, env_cfg, episodes, ra));
    s.after.push_back(evaluate_attacker(attacker, art.phi_after, env_cfg, episodes, rb));
    s.ratio.push_back(ratio_of(s.before.back(), s.after.back()));
    if (s.ratio.back()) defined.push_back(*s.ratio.back());
  }
  if (!defined.empty()) {
    const double n = static_cast<double>(defined.size());
    const double m = std::accumulate(defined.begin(), defined.end(), 0.0) / n;
    double v = 0.0;
    for (double x : defined) v += (x - m) * (x - m);
    s.mean = m;
    s.variance = v / n;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Cross evaluation

struct CrossEvalMatrix {
  std::size_t size = 0;
  std::vector<double> values;  // row = attacker version, column = scoring version

  double at(std::size_t attacker, std::size_t system) const { return values[attacker * size + system]; }
  friend bool operator==(const CrossEvalMatrix&, const CrossEvalMatrix&) = default;
};

inline Rng cross_eval_stream(std::uint64_t seed, std::size_t size, std::size_t i, std::size_t j) {
  return make_stream(seed, "eval", i * size + j);
}

/// Entry (i, j): attacker of round i against the scoring system round j was
/// trained against (version j = j enhancer updates applied).
inline CrossEvalMatrix cross_eval(const std::vector<RoundArtifact>& rounds, const EnvConfig& env_cfg, int episodes,
                                  std::uint64_t seed) {
  CrossEvalMatrix m;
  m.size = rounds.size();
  m.values.assign(m.size * m.size, 0.0);
  std::vector<Attacker> attackers;
  for (const auto& r : rounds) attackers.push_back(attacker_from_json(r.theta));
  for (std::size_t i = 0; i < m.size; ++i) {
    for (std::size_t j = 0; j < m.size; ++j) {
      Rng rng = cross_eval_stream(seed, m.size, i, j);
      m.values[i * m.size + j] = evaluate_attacker(attackers[i], rounds[j].phi_before, env_cfg, episodes, rng);
    }
  }
  return m;
}

inline std::string matrix_to_csv(const CrossEvalMatrix& m) {
  std::string s = "attacker";
  for (std::size_t j = 0; j < m.size; ++j) s += ",v" + std::to_string(j);
  s += "\n";
  for (std::size_t i = 0; i < m.size; ++i) {
    s += "v" + std::to_string(i);
    for (std::size_t j = 0; j < m.size; ++j) s += "," + csv_number(m.at(i, j));
    s += "\n";
  }
  return s;
}

inline CrossEvalMatrix matrix_from_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw DataError(path.string() + ": empty matrix file");
  CrossEvalMatrix m;
  m.size = rows.front().size() - 1;
  if (rows.size() != m.size + 1) throw DataError(path.string() + ": matrix is not square");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != m.size + 1) throw DataError(path.string() + ": ragged row " + std::to_string(i));
    for (std::size_t j = 1; j < rows[i].size(); ++j) {
      try {
        m.values.push_back(std::stod(rows[i][j]));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad number '" + rows[i][j] + "'");
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Action statistics

struct DistributionTable {
  App app = App::Cloud;
  std::vector<double> proportions;  // per discrete action
  std::vector<double> slot_mean;    // per continuous slot, over the actions using it
  std::vector<double> slot_std;
  std::size_t total = 0;
};

inline DistributionTable action_distribution(App app, const std::vector<std::vector<HybridAction>>& trajs) {
  DistributionTable d;
  d.app = app;
  const auto m = static_cast<std::size_t>(action_count(app));
  const auto s = static_cast<std::size_t>(slot_count(app));
  std::vector<std::size_t> counts(m, 0);
  std::vector<std::vector<double>> slot_values(s);
  for (const auto& traj : trajs) {
    for (const auto& a : traj) {
      if (a.discrete < 0 || a.discrete >= action_count(app)) throw DataError("action out of range");
      counts[static_cast<std::size_t>(a.discrete)] += 1;
      const auto slots = sampled_slots(app, a.discrete);
      if (!slots.empty()) slot_values[slots[0]].push_back(a.continuous);
      if (slots.size() > 1) slot_values[slots[1]].push_back(a.continuous2);
      ++d.total;
    }
  }
  if (d.total == 0) throw UsageError("action_distribution needs at least one action");
  for (std::size_t c = 0; c < m; ++c) d.proportions.push_back(static_cast<double>(counts[c]) / static_cast<double>(d.total));
  for (const auto& v : slot_values) {
    double mean = 0.0, var = 0.0;
    if (!v.empty()) {
      mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      for (double x : v) var += (x - mean) * (x - mean);
      var /= static_cast<double>(v.size());
    }
    d.slot_mean.push_back(mean);
    d.slot_std.push_back(std::sqrt(var));
  }
  return d;
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw UsageError("rmse needs two nonempty vectors of equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline double rmse(const DistributionTable& a, const DistributionTable& b) { return rmse(a.proportions, b.proportions); }

inline std::string distribution_to_csv(const DistributionTable& d) {
  std::string s = "kind,name,value,std\n";
  for (std::size_t c = 0; c < d.proportions.size(); ++c) {
    s += "proportion," + std::string(action_name(d.app, static_cast<int>(c))) + "," + csv_number(d.proportions[c]) + ",\n";
  }
  for (std::size_t k = 0; k < d.slot_mean.size(); ++k) {
    const std::string name = k < d.proportions.size() ? std::string(action_name(d.app, static_cast<int>(k)))
                                                      : std::string("in-out:consume");
    s += "amount," + name + "," + csv_number(d.slot_mean[k]) + "," + csv_number(d.slot_std[k]) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Scoring quality

inline double final_score(const ScoringParams& phi, const RealTrace& trace, const EnvConfig& env_cfg) {
  const auto records = trace_records(phi.app, trace, env_cfg);
  return Scorer(phi, env_cfg.window).evaluate(records).score;
}

/// Share of good traces among the k highest final-step scores. Ties are
/// broken by a seeded shuffle.
inline double precision_at_k(const ScoringParams& phi, const std::vector<RealTrace>& traces, std::size_t k,
                             const EnvConfig& env_cfg, std::uint64_t seed = 0) {
  if (k == 0 || k > traces.size()) throw UsageError("precision@k needs 1 <= k <= number of traces");
  std::vector<std::pair<double, bool>> scored;
  for (const auto& t : traces) {
    if (!t.good) throw UsageError("trace " + t.user + " carries no good/bad label");
    scored.emplace_back(final_score(phi, t, env_cfg), *t.good);
  }
  Rng rng = make_stream(seed, "ties");
  std::shuffle(scored.begin(), scored.end(), rng);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t good = 0;
  for (std::size_t i = 0; i < k; ++i) good += scored[i].second ? 1 : 0;
  return static_cast<double>(good) / static_cast<double>(k);
}

/// Labeled synthetic users. Good cloud users ask early and then keep their
/// quota busy; bad ones ask often and sit idle. Good bank users run
/// balanced in-outs; bad ones go inactive and consume without repaying.
inline std::vector<RealTrace> synth_labeled_traces(App app, int n_good, int n_bad, std::uint64_t seed,
                                                   int length = 60, const EnvConfig& env_in = {}) {
  if (n_good < 0 || n_bad < 0 || length <= 0) throw UsageError("trace counts must be nonnegative");
  EnvConfig env_cfg = env_in;
  env_cfg.app = app;
  env_cfg.max_episode_len = length;
  const ScoringParams phi = ScoringParams::uniform(app);
  std::vector<RealTrace> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto generate = [&](bool good, int index) {
    Rng rng = make_stream(seed, good ? "synth-good" : "synth-bad", static_cast<std::uint64_t>(index));
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    Environment env(env_cfg, phi);
    RealTrace t;
    t.user = std::string(good ? "good_" : "bad_") + std::to_string(index);
    t.good = good;
    for (int step = 0; step < length; ++step) {
      const Ledger& led = env.state().ledger;
      const double p = unit(rng);
      HybridAction a;
      if (app == App::Cloud) {
        if (good) {
          if (step == 0) a = {cloud::kAsk, u(20.0, 40.0), 0.0};
          else if (p < 0.85) a = {cloud::kDeploy, led.quota * u(0.8, 1.0), 0.0};
          else if (p < 0.88) a = {cloud::kAsk, u(2.0, 6.0), 0.0};
          else a = {cloud::kWait, 0.0, 0.0};
        } else {
          if (p < 0.3) a = {cloud::kAsk, u(10.0, 30.0), 0.0};
          else if (p < 0.8) a = {cloud::kWait, 0.0, 0.0};
          else a = {cloud::kDeploy, led.quota * u(0.1, 0.4), 0.0};
        }
      } else {
        if (good) {
          const double repay = u(5.0, 15.0);
          if (p < 0.6) a = {bank::kInOut, repay, repay * u(0.9, 1.1)};
          else if (p < 0.85) a = {bank::kRepay, repay, 0.0};
          else if (p < 0.95) a = {bank::kConsume, u(2.0, 8.0), 0.0};
          else a = {bank::kInactive, 0.0, 0.0};
        } else {
          if (p < 0.5) a = {bank::kInactive, 0.0, 0.0};
          else if (p < 0.8) a = {bank::kConsume, u(10.0, 30.0), 0.0};
          else a = {bank::kInOut, u(1.0, 5.0), u(10.0, 30.0)};
        }
      }
      const StepOutcome o = env.step(a);
      t.records.push_back({step, o.record.action_type, o.record.amount, o.record.amount2});
    }
    return t;
  };

  for (int i = 0; i < n_good; ++i) out.push_back(generate(true, i));
  for (int i = 0; i < n_bad; ++i) out.push_back(generate(false, i));
  return out;
}

// ---------------------------------------------------------------------------
// SVG reports

struct Series {
  std::string name;
  std::vector<double> values;
};

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string line_chart_svg(const std::string& title, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 40;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
  bool first = true;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << svg_escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << L - 5 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << hi << "</text>\n";
  o << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">" << lo << "</text>\n";
  const double span_x = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      const double v = series[k].values[i];
      if (!std::isfinite(v)) continue;
      const double x = L + (W - L - R) * static_cast<double>(i) / span_x;
      const double y = H - B - (H - T - B) * (v - lo) / (hi - lo);
      o << x << "," << y << " ";
    }
    o << "\"/>\n";
    o << "<text x=\"" << W - R - 5 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
      << color << "\">" << svg_escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string heatmap_svg(const std::string& title, const CrossEvalMatrix& m) {
  constexpr double cell = 28, L = 50, T = 50;
  const double W = L + cell * static_cast<double>(m.size) + 20;
  const double H = T + cell * static_cast<double>(m.size) + 20;
  double lo = 0.0, hi = 1.0;
  if (!m.values.empty()) {
    lo = *std::min_element(m.values.begin(), m.values.end());
    hi = *std::max_element(m.values.begin(), m.values.end());
  }
  if (hi <= lo) hi = lo + 1.0;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  o << "<text x=\"" << L << "\" y=\"40\" font-size=\"10\">rows: attacker version, columns: system version</text>\n";
  for (std::size_t i = 0; i < m.size; ++i) {
    for (std::size_t j = 0; j < m.size; ++j) {
      const double t = (m.at(i, j) - lo) / (hi - lo);
      const int red = 255;
      const int gb = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      o << "<rect x=\"" << L + cell * static_cast<double>(j) << "\" y=\"" << T + cell * static_cast<double>(i)
        << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red << "," << gb << "," << gb
        << ")\"><title>" << m.at(i, j) << "</title></rect>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace advscore
