#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advscore/attacker.hpp"
#include "advscore/enhancer.hpp"
#include "advscore/io.hpp"
#include "advscore/rng.hpp"

namespace advscore {

struct RunConfig {
  App app = App::Cloud;
  int rounds = 20;
  std::uint64_t seed = 0;
  PpoConfig ppo;
  EnvConfig env = EnvConfig::defaults(App::Cloud);
  EnhanceConfig enhancer;
  int attacker_cycles = 50;
  double early_stop_rel = 0.01;  // stop once the cycle reward moves < 1% ...
  int early_stop_span = 5;       // ... across this many cycles
  int test_episodes = 10;
  bool without_reg = false;      // ablation: forces dtw_weight = 0
  std::string real_traces;       // optional JSONL path
  std::string output_dir;        // empty: keep artifacts in memory only
  std::string name = "run";

  static RunConfig defaults(App app) {
    RunConfig c;
    c.app = app;
    c.env = EnvConfig::defaults(app);
    return c;
  }

  double effective_dtw_weight() const { return without_reg ? 0.0 : ppo.dtw_weight; }

  void validate() const {
    if (rounds < 0 || attacker_cycles < 0 || test_episodes < 0 || early_stop_span <= 0 || early_stop_rel < 0.0) {
      throw UsageError("run budgets must be nonnegative");
    }
    if (env.app != app) throw UsageError("env config and run disagree on app");
    ppo.validate();
    env.validate();
    enhancer.validate();
    if (effective_dtw_weight() > 0.0 && real_traces.empty()) {
      throw UsageError("dtw_weight > 0 needs a real-trace file");
    }
  }
};

inline Json to_json(const RunConfig& c) {
  return {{"version", kSchemaVersion},
          {"app", app_name(c.app)},
          {"rounds", c.rounds},
          {"seed", c.seed},
          {"ppo", to_json(c.ppo)},
          {"env", to_json(c.env)},
          {"enhancer", to_json(c.enhancer)},
          {"attacker_cycles", c.attacker_cycles},
          {"early_stop_rel", c.early_stop_rel},
          {"early_stop_span", c.early_stop_span},
          {"test_episodes", c.test_episodes},
          {"without_reg", c.without_reg},
          {"real_traces", c.real_traces},
          {"output_dir", c.output_dir},
          {"name", c.name}};
}

/// Missing keys take their defaults; "version" is optional here so a
/// hand-written config can stay short.
inline RunConfig run_config_from_json(const Json& j, const std::string& what = "run config") {
  if (!j.is_object()) throw DataError(what + ": expected an object");
  if (j.contains("version")) check_version(j, what);
  RunConfig c = RunConfig::defaults(parse_app(json_get_or<std::string>(j, "app", "cloud", what)));
  c.rounds = json_get_or(j, "rounds", c.rounds, what);
  c.seed = json_get_or(j, "seed", c.seed, what);
  c.ppo = ppo_config_from_json(j.value("ppo", Json()), what);
  c.env = env_config_from_json(j.value("env", Json()), c.app, what);
  c.enhancer = enhance_config_from_json(j.value("enhancer", Json()), what);
  c.attacker_cycles = json_get_or(j, "attacker_cycles", c.attacker_cycles, what);
  c.early_stop_rel = json_get_or(j, "early_stop_rel", c.early_stop_rel, what);
  c.early_stop_span = json_get_or(j, "early_stop_span", c.early_stop_span, what);
  c.test_episodes = json_get_or(j, "test_episodes", c.test_episodes, what);
  c.without_reg = json_get_or(j, "without_reg", c.without_reg, what);
  c.real_traces = json_get_or<std::string>(j, "real_traces", c.real_traces, what);
  c.output_dir = json_get_or<std::string>(j, "output_dir", c.output_dir, what);
  c.name = json_get_or<std::string>(j, "name", c.name, what);
  return c;
}

inline std::uint64_t content_hash(const Json& j) { return fnv1a(j.dump()); }
inline std::uint64_t content_hash(const ScoringParams& p) { return content_hash(to_json(p)); }
inline std::uint64_t content_hash(const FrozenCorpus& c) { return fnv1a(corpus_to_jsonl(c)); }

struct RoundArtifact {
  int round = 0;
  ScoringParams phi_before;
  ScoringParams phi_after;
  Json theta;                              // attacker checkpoint
  std::vector<double> train_reward_curve;  // mean episode reward per PPO cycle
  std::vector<double> enhancer_loss_curve;
  double test_reward = 0.0;                // mean corpus reward under phi_before
  FrozenCorpus corpus;
  std::uint64_t attacker_phi_hash = 0;     // Phi the attacker trained against
  std::uint64_t enhancer_corpus_hash = 0;  // corpus the enhancer descended on

  friend bool operator==(const RoundArtifact&, const RoundArtifact&) = default;
};

/// Sticks when the per-cycle reward has moved less than `rel` (relative)
/// across the last `span` cycles.
inline bool converged(const std::vector<double>& curve, double rel, int span) {
  const auto s = static_cast<std::size_t>(span);
  if (curve.size() <= s) return false;
  const double then = curve[curve.size() - 1 - s];
  const double now = curve.back();
  return std::abs(now - then) < rel * std::abs(then);
}

struct RunCallbacks {
  std::function<void(int round, int cycle, const CycleReport&)> on_cycle;
  std::function<void(const RoundArtifact&)> on_round;
};

inline std::filesystem::path round_dir(const std::filesystem::path& run_dir, int round) {
  return run_dir / ("round_" + std::to_string(round));
}

inline void save_round(const std::filesystem::path& dir, const RoundArtifact& a);

/// Alternates attacker training and enhancement for cfg.rounds rounds.
inline std::vector<RoundArtifact> run(const RunConfig& cfg_in, const RunCallbacks& cb = {}) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  cfg.ppo.dtw_weight = cfg.effective_dtw_weight();
  cfg.ppo.max_episode_len = cfg.env.max_episode_len;

  std::vector<Sequence> real;
  if (!cfg.real_traces.empty()) {
    const auto traces = load_traces(cfg.real_traces, cfg.app);
    if (traces.empty() && cfg.ppo.dtw_weight > 0.0) throw DataError(cfg.real_traces + ": no real traces");
    real = encode_traces(cfg.app, traces, cfg.ppo.action_scale);
  }

  std::filesystem::path run_dir;
  if (!cfg.output_dir.empty()) {
    run_dir = std::filesystem::path(cfg.output_dir) / cfg.name;
    write_json(run_dir / "config.json", to_json(cfg_in));
  }

  Rng init_rng = make_stream(cfg.seed, "actor-init");
  Attacker attacker(cfg.app, cfg.ppo, init_rng);
  ScoringParams phi = ScoringParams::uniform(cfg.app);
  std::vector<RoundArtifact> out;

  for (int round = 0; round < cfg.rounds; ++round) {
    RoundArtifact art;
    art.round = round;
    art.phi_before = phi;
    art.attacker_phi_hash = content_hash(phi);

    attacker.reset_schedule();
    Rng sampling = make_stream(cfg.seed, "sampling", static_cast<std::uint64_t>(round));
    for (int c = 0; c < cfg.attacker_cycles; ++c) {
      const CycleReport rep = attacker.train_cycle(phi, cfg.env, real, sampling);
      art.train_reward_curve.push_back(rep.mean_episode_reward);
      if (cb.on_cycle) cb.on_cycle(round, c, rep);
      if (converged(art.train_reward_curve, cfg.early_stop_rel, cfg.early_stop_span)) break;
    }
    art.theta = attacker_to_json(attacker);

    Rng env_rng = make_stream(cfg.seed, "env", static_cast<std::uint64_t>(round));
    const auto trajs = attacker.rollout(phi, cfg.env, cfg.test_episodes, env_rng);
    art.corpus.app = cfg.app;
    double total = 0.0;
    for (const auto& t : trajs) {
      art.corpus.trajectories.push_back(t.actions());
      total += t.total_reward();
    }
    art.test_reward = trajs.empty() ? 0.0 : total / static_cast<double>(trajs.size());

    art.enhancer_corpus_hash = content_hash(art.corpus);
    const EnhanceResult enh = enhance(phi, art.corpus, cfg.env, cfg.enhancer);
    art.enhancer_loss_curve = enh.loss_curve;
    art.phi_after = enh.phi;
    phi = enh.phi;

    if (!run_dir.empty()) save_round(round_dir(run_dir, round), art);
    if (cb.on_round) cb.on_round(art);
    out.push_back(std::move(art));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: round_<i>/{phi.json, phi_before.json, theta.json, curves.csv,
// corpus.jsonl, round.json}

inline std::string curves_csv(const RoundArtifact& a) {
  std::string s = "kind,index,value\n";
  for (std::size_t i = 0; i < a.train_reward_curve.size(); ++i) {
    s += "train_reward," + std::to_string(i) + "," + csv_number(a.train_reward_curve[i]) + "\n";
  }
  for (std::size_t i = 0; i < a.enhancer_loss_curve.size(); ++i) {
    s += "enhancer_loss," + std::to_string(i) + "," + csv_number(a.enhancer_loss_curve[i]) + "\n";
  }
  return s;
}

inline void save_round(const std::filesystem::path& dir, const RoundArtifact& a) {
  write_json(dir / "phi_before.json", to_json(a.phi_before));
  write_json(dir / "theta.json", a.theta);
  write_file_atomic(dir / "curves.csv", curves_csv(a));
  write_file_atomic(dir / "corpus.jsonl", corpus_to_jsonl(a.corpus));
  // Curves are also kept here in JSON so reloads are exact.
  write_json(dir / "round.json", {{"version", kSchemaVersion},
                                  {"round", a.round},
                                  {"test_reward", a.test_reward},
                                  {"train_reward_curve", a.train_reward_curve},
                                  {"enhancer_loss_curve", a.enhancer_loss_curve},
                                  {"attacker_phi_hash", a.attacker_phi_hash},
                                  {"enhancer_corpus_hash", a.enhancer_corpus_hash}});
  // phi.json last: its presence marks a complete round.
  write_json(dir / "phi.json", to_json(a.phi_after));
}

inline RoundArtifact load_round(const std::filesystem::path& dir) {
  const std::string what = (dir / "round.json").string();
  const Json meta = read_json(dir / "round.json");
  check_version(meta, what);
  RoundArtifact a;
  a.round = json_get<int>(meta, "round", what);
  a.test_reward = json_get<double>(meta, "test_reward", what);
  a.train_reward_curve = json_get<std::vector<double>>(meta, "train_reward_curve", what);
  a.enhancer_loss_curve = json_get<std::vector<double>>(meta, "enhancer_loss_curve", what);
  a.attacker_phi_hash = json_get<std::uint64_t>(meta, "attacker_phi_hash", what);
  a.enhancer_corpus_hash = json_get<std::uint64_t>(meta, "enhancer_corpus_hash", what);
  a.phi_before = load_scoring_params(dir / "phi_before.json");
  a.phi_after = load_scoring_params(dir / "phi.json");
  a.theta = read_json(dir / "theta.json");
  check_version(a.theta, (dir / "theta.json").string());
  a.corpus = load_corpus(dir / "corpus.jsonl", a.phi_before.app);
  return a;
}

inline RunConfig load_run_config(const std::filesystem::path& run_dir) {
  return run_config_from_json(read_json(run_dir / "config.json"), (run_dir / "config.json").string());
}

/// All complete rounds of a run directory, in order.
inline std::vector<RoundArtifact> load_run(const std::filesystem::path& run_dir) {
  std::vector<RoundArtifact> out;
  for (int i = 0; std::filesystem::exists(round_dir(run_dir, i) / "phi.json"); ++i) {
    out.push_back(load_round(round_dir(run_dir, i)));
  }
  if (out.empty()) throw DataError(run_dir.string() + ": no rounds found");
  return out;
}

}  // namespace advscore
