#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "advscore/attacker.hpp"
#include "advscore/common.hpp"
#include "advscore/enhancer.hpp"
#include "advscore/environment.hpp"
#include "advscore/neural.hpp"
#include "advscore/scoring.hpp"

namespace advscore {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it into place, so readers
/// never see a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError(where + ": invalid JSON: " + e.what());
  }
}

inline Json read_json(const std::filesystem::path& path) { return parse_json(read_file(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline void check_version(const Json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("version")) throw DataError(what + ": missing version field");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kSchemaVersion) {
    throw DataError(what + ": unsupported version " + j["version"].dump());
  }
}

template <class T>
T json_get(const Json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw DataError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(what + ": bad field '" + key + "': " + e.what());
  }
}

template <class T>
T json_get_or(const Json& j, const char* key, T fallback, const std::string& what) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return json_get<T>(j, key, what);
}

// ---------------------------------------------------------------------------
// Scoring parameters

inline Json to_json(const ScoringParams& p) {
  Json mods = Json::array();
  for (const auto& m : p.modules) mods.push_back({{"gamma", m.gamma}, {"lambda", m.lambda}});
  return {{"version", kSchemaVersion}, {"app", app_name(p.app)}, {"weights", p.weights}, {"modules", mods}};
}

inline ScoringParams scoring_params_from_json(const Json& j, const std::string& what = "scoring params") {
  check_version(j, what);
  ScoringParams p;
  p.app = parse_app(json_get<std::string>(j, "app", what));
  p.weights = json_get<std::vector<double>>(j, "weights", what);
  const Json mods = json_get<Json>(j, "modules", what);
  if (!mods.is_array()) throw DataError(what + ": modules must be an array");
  for (const auto& m : mods) p.modules.push_back({json_get<double>(m, "gamma", what), json_get<double>(m, "lambda", what)});
  p.validate();
  return p;
}

inline ScoringParams load_scoring_params(const std::filesystem::path& path) {
  return scoring_params_from_json(read_json(path), path.string());
}

// ---------------------------------------------------------------------------
// Networks and attacker checkpoints

inline Json to_json(const DenseNet& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in},
                      {"out", l.out},
                      {"activation", activation_name(l.activation)},
                      {"weight", l.weight},
                      {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

inline DenseNet dense_net_from_json(const Json& j, const std::string& what) {
  DenseNet net;
  const Json layers = json_get<Json>(j, "layers", what);
  if (!layers.is_array()) throw DataError(what + ": layers must be an array");
  for (const auto& l : layers) {
    DenseLayer layer;
    layer.in = json_get<std::size_t>(l, "in", what);
    layer.out = json_get<std::size_t>(l, "out", what);
    layer.activation = parse_activation(json_get<std::string>(l, "activation", what));
    layer.weight = json_get<std::vector<double>>(l, "weight", what);
    layer.bias = json_get<std::vector<double>>(l, "bias", what);
    net.layers().push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline Json to_json(const PpoConfig& c) {
  return {{"clip_eps", c.clip_eps},
          {"gamma", c.gamma},
          {"lam", c.lam},
          {"sigma_initial", c.sigma.initial},
          {"sigma_step", c.sigma.step},
          {"sigma_floor", c.sigma.floor},
          {"sigma_every", c.sigma.every},
          {"lr_actor", c.lr_actor},
          {"lr_critic", c.lr_critic},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"max_episode_len", c.max_episode_len},
          {"episodes_per_cycle", c.episodes_per_cycle},
          {"dtw_weight", c.dtw_weight},
          {"dtw_eta", c.dtw_eta},
          {"dtw_pairs", c.dtw_pairs},
          {"action_scale", c.action_scale},
          {"embed_width", c.embed_width},
          {"hidden_width", c.hidden_width}};
}

/// Missing keys keep their defaults.
inline PpoConfig ppo_config_from_json(const Json& j, const std::string& what = "ppo config") {
  PpoConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw DataError(what + ": expected an object");
  c.clip_eps = json_get_or(j, "clip_eps", c.clip_eps, what);
  c.gamma = json_get_or(j, "gamma", c.gamma, what);
  c.lam = json_get_or(j, "lam", c.lam, what);
  c.sigma.initial = json_get_or(j, "sigma_initial", c.sigma.initial, what);
  c.sigma.step = json_get_or(j, "sigma_step", c.sigma.step, what);
  c.sigma.floor = json_get_or(j, "sigma_floor", c.sigma.floor, what);
  c.sigma.every = json_get_or(j, "sigma_every", c.sigma.every, what);
  c.lr_actor = json_get_or(j, "lr_actor", c.lr_actor, what);
  c.lr_critic = json_get_or(j, "lr_critic", c.lr_critic, what);
  c.epochs = json_get_or(j, "epochs", c.epochs, what);
  c.minibatch = json_get_or(j, "minibatch", c.minibatch, what);
  c.max_episode_len = json_get_or(j, "max_episode_len", c.max_episode_len, what);
  c.episodes_per_cycle = json_get_or(j, "episodes_per_cycle", c.episodes_per_cycle, what);
  c.dtw_weight = json_get_or(j, "dtw_weight", c.dtw_weight, what);
  c.dtw_eta = json_get_or(j, "dtw_eta", c.dtw_eta, what);
  c.dtw_pairs = json_get_or(j, "dtw_pairs", c.dtw_pairs, what);
  c.action_scale = json_get_or(j, "action_scale", c.action_scale, what);
  c.embed_width = json_get_or(j, "embed_width", c.embed_width, what);
  c.hidden_width = json_get_or(j, "hidden_width", c.hidden_width, what);
  return c;
}

inline Json to_json(const HybridPolicy& p) {
  return {{"app", app_name(p.app)},
          {"dis_embed", to_json(p.dis_embed)},
          {"dis_actor", to_json(p.dis_actor)},
          {"con_embed", to_json(p.con_embed)},
          {"con_actor", to_json(p.con_actor)},
          {"critic_embed", to_json(p.critic_embed)},
          {"critic", to_json(p.critic)}};
}

inline HybridPolicy policy_from_json(const Json& j, const std::string& what) {
  HybridPolicy p;
  p.app = parse_app(json_get<std::string>(j, "app", what));
  p.dis_embed = dense_net_from_json(json_get<Json>(j, "dis_embed", what), what);
  p.dis_actor = dense_net_from_json(json_get<Json>(j, "dis_actor", what), what);
  p.con_embed = dense_net_from_json(json_get<Json>(j, "con_embed", what), what);
  p.con_actor = dense_net_from_json(json_get<Json>(j, "con_actor", what), what);
  p.critic_embed = dense_net_from_json(json_get<Json>(j, "critic_embed", what), what);
  p.critic = dense_net_from_json(json_get<Json>(j, "critic", what), what);
  const auto k = static_cast<std::size_t>(module_count(p.app));
  const auto m = static_cast<std::size_t>(action_count(p.app));
  if (p.dis_embed.input_size() != k || p.con_embed.input_size() != k || p.critic_embed.input_size() != k ||
      p.dis_actor.input_size() != p.dis_embed.output_size() || p.dis_actor.output_size() != m ||
      p.con_actor.input_size() != p.con_embed.output_size() + m ||
      p.con_actor.output_size() != static_cast<std::size_t>(slot_count(p.app)) ||
      p.critic.input_size() != p.critic_embed.output_size() || p.critic.output_size() != 1 ||
      p.dis_actor.layers().back().activation != Activation::Softmax) {
    throw DataError(what + ": network shapes do not fit the " + std::string(app_name(p.app)) + " policy");
  }
  return p;
}

/// Checkpoint: weights, PPO settings and the sigma-schedule position.
/// Optimizer moments are not stored.
inline Json attacker_to_json(const Attacker& a) {
  return {{"version", kSchemaVersion}, {"policy", to_json(a.policy())}, {"ppo", to_json(a.config())}, {"epoch", a.epoch()}};
}

inline Attacker attacker_from_json(const Json& j, const std::string& what = "attacker checkpoint") {
  check_version(j, what);
  auto cfg = ppo_config_from_json(json_get<Json>(j, "ppo", what), what);
  cfg.validate();
  return Attacker(policy_from_json(json_get<Json>(j, "policy", what), what), cfg, json_get<int>(j, "epoch", what));
}

inline Attacker load_attacker(const std::filesystem::path& path) { return attacker_from_json(read_json(path), path.string()); }

// ---------------------------------------------------------------------------
// Environment and enhancer settings

inline Json to_json(const EnvConfig& c) {
  return {{"app", app_name(c.app)},
          {"window", c.window},
          {"max_episode_len", c.max_episode_len},
          {"capacity", c.capacity},
          {"initial_quota", c.initial_quota},
          {"credit_limit", c.credit_limit},
          {"min_inout_amount", c.min_inout_amount}};
}

inline EnvConfig env_config_from_json(const Json& j, App app, const std::string& what = "env config") {
  EnvConfig c = EnvConfig::defaults(app);
  if (j.is_null()) return c;
  if (!j.is_object()) throw DataError(what + ": expected an object");
  c.window = json_get_or(j, "window", c.window, what);
  c.max_episode_len = json_get_or(j, "max_episode_len", c.max_episode_len, what);
  c.capacity = json_get_or(j, "capacity", c.capacity, what);
  c.initial_quota = json_get_or(j, "initial_quota", c.initial_quota, what);
  c.credit_limit = json_get_or(j, "credit_limit", c.credit_limit, what);
  c.min_inout_amount = json_get_or(j, "min_inout_amount", c.min_inout_amount, what);
  return c;
}

inline Json to_json(const EnhanceConfig& c) {
  return {{"lr", c.lr}, {"max_iters", c.max_iters}, {"tol", c.tol}, {"fd_step", c.fd_step}, {"max_halvings", c.max_halvings}};
}

inline EnhanceConfig enhance_config_from_json(const Json& j, const std::string& what = "enhancer config") {
  EnhanceConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw DataError(what + ": expected an object");
  c.lr = json_get_or(j, "lr", c.lr, what);
  c.max_iters = json_get_or(j, "max_iters", c.max_iters, what);
  c.tol = json_get_or(j, "tol", c.tol, what);
  c.fd_step = json_get_or(j, "fd_step", c.fd_step, what);
  c.max_halvings = json_get_or(j, "max_halvings", c.max_halvings, what);
  return c;
}

// ---------------------------------------------------------------------------
// JSONL: corpora, trajectories and real traces

inline std::vector<std::pair<std::size_t, Json>> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, Json>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.emplace_back(lineno, Json::parse(line));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
  }
  return out;
}

// x2 is only meaningful for bank in-out; elsewhere it is written as null.
inline Json x2_field(App app, const HybridAction& a) {
  if (app == App::Bank && a.discrete == bank::kInOut) return a.continuous2;
  return nullptr;
}

/// One line per step: {"episode","t","c","x","x2"}; simulated trajectories
/// add "reward", "score" and "modules".
inline std::string corpus_to_jsonl(const FrozenCorpus& corpus) {
  std::string out;
  for (std::size_t e = 0; e < corpus.trajectories.size(); ++e) {
    const auto& traj = corpus.trajectories[e];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const Json line = {{"episode", e},
                         {"t", t},
                         {"c", action_name(corpus.app, traj[t].discrete)},
                         {"x", traj[t].continuous},
                         {"x2", x2_field(corpus.app, traj[t])}};
      out += line.dump() + "\n";
    }
  }
  return out;
}

inline std::string trajectories_to_jsonl(App app, const std::vector<Trajectory>& trajs, const ScoringParams& phi,
                                         const EnvConfig& env_cfg) {
  std::string out;
  for (std::size_t e = 0; e < trajs.size(); ++e) {
    const auto actions = trajs[e].actions();
    EnvConfig cfg = env_cfg;
    cfg.max_episode_len = std::max<int>(1, static_cast<int>(actions.size()));
    Environment env(cfg, phi);
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const auto o = env.step(actions[t]);
      const Json line = {{"episode", e},
                         {"t", t},
                         {"c", action_name(app, actions[t].discrete)},
                         {"x", actions[t].continuous},
                         {"x2", x2_field(app, actions[t])},
                         {"reward", o.reward},
                         {"score", o.state.score},
                         {"modules", o.state.modules}};
      out += line.dump() + "\n";
    }
  }
  return out;
}

inline FrozenCorpus load_corpus(const std::filesystem::path& path, App app) {
  FrozenCorpus corpus;
  corpus.app = app;
  std::map<long, std::vector<std::pair<long, HybridAction>>> episodes;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    HybridAction a;
    a.discrete = parse_action(app, json_get<std::string>(j, "c", where));
    a.continuous = json_get_or(j, "x", 0.0, where);
    a.continuous2 = json_get_or(j, "x2", 0.0, where);
    if (!(a.continuous >= 0.0) || !(a.continuous2 >= 0.0)) throw DataError(where + ": amounts must be >= 0");
    episodes[json_get<long>(j, "episode", where)].emplace_back(json_get<long>(j, "t", where), a);
  }
  for (auto& [ep, steps] : episodes) {
    std::stable_sort(steps.begin(), steps.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<HybridAction> traj;
    for (const auto& s : steps) traj.push_back(s.second);
    corpus.trajectories.push_back(std::move(traj));
  }
  return corpus;
}

struct TraceRecord {
  long step = 0;
  int action = 0;
  double amount = 0.0;
  double amount2 = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct RealTrace {
  std::string user;
  std::vector<TraceRecord> records;  // sorted by step
  std::optional<bool> good;          // label, when the file carries one

  std::vector<HybridAction> actions() const {
    std::vector<HybridAction> a;
    for (const auto& r : records) a.push_back({r.action, r.amount, r.amount2});
    return a;
  }

  friend bool operator==(const RealTrace&, const RealTrace&) = default;
};

/// Reads {"user","step","action","amount","amount2"?,"label"?} lines,
/// grouped by user (first-appearance order) and sorted by step.
inline std::vector<RealTrace> load_traces(const std::filesystem::path& path, App app) {
  std::vector<RealTrace> traces;
  std::map<std::string, std::size_t> index;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!j.is_object()) throw DataError(where + ": expected an object");
    TraceRecord r;
    const auto user = json_get<std::string>(j, "user", where);
    r.step = json_get<long>(j, "step", where);
    const auto action = json_get<std::string>(j, "action", where);
    try {
      r.action = parse_action(app, action);
    } catch (const DataError&) {
      throw DataError(where + ": unknown " + std::string(app_name(app)) + " action '" + action + "'");
    }
    r.amount = json_get_or(j, "amount", 0.0, where);
    r.amount2 = json_get_or(j, "amount2", 0.0, where);
    if (!(r.amount >= 0.0) || !(r.amount2 >= 0.0)) throw DataError(where + ": amounts must be >= 0");
    auto [it, fresh] = index.emplace(user, traces.size());
    if (fresh) traces.push_back(RealTrace{user, {}, std::nullopt});
    RealTrace& t = traces[it->second];
    if (j.contains("label")) {
      const auto label = json_get<std::string>(j, "label", where);
      if (label != "good" && label != "bad") throw DataError(where + ": label must be good or bad");
      t.good = label == "good";
    }
    t.records.push_back(r);
  }
  for (auto& t : traces) {
    std::stable_sort(t.records.begin(), t.records.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
  }
  return traces;
}

inline std::string traces_to_jsonl(App app, const std::vector<RealTrace>& traces) {
  std::string out;
  for (const auto& t : traces) {
    for (const auto& r : t.records) {
      Json line = {{"user", t.user}, {"step", r.step}, {"action", action_name(app, r.action)}, {"amount", r.amount}};
      if (app == App::Bank && r.action == bank::kInOut) line["amount2"] = r.amount2;
      if (t.good) line["label"] = *t.good ? "good" : "bad";
      out += line.dump() + "\n";
    }
  }
  return out;
}

/// Activity records for a trace, with cloud quota tracked from the asks so
/// utilization has a denominator.
inline std::vector<ActionRecord> trace_records(App app, const RealTrace& trace, const EnvConfig& env_cfg) {
  std::vector<ActionRecord> out;
  double quota = env_cfg.initial_quota;
  for (const auto& r : trace.records) {
    ActionRecord rec;
    rec.action_type = r.action;
    rec.amount = r.amount;
    if (app == App::Cloud) {
      if (r.action == cloud::kAsk) quota += r.amount;
      rec.max_quota = quota;
    } else if (r.action == bank::kInOut) {
      rec.amount2 = r.amount2;
      if (!(r.amount > 0.0 && r.amount2 > 0.0)) {
        throw DataError("trace " + trace.user + " step " + std::to_string(r.step) + ": in-out needs both amounts > 0");
      }
    }
    out.push_back(rec);
  }
  return out;
}

/// Normalized slot encodings of real traces for the soft-DTW regularizer.
inline std::vector<Sequence> encode_traces(App app, const std::vector<RealTrace>& traces, double scale) {
  std::vector<Sequence> out;
  for (const auto& t : traces) {
    if (!t.records.empty()) out.push_back(encode_actions(app, t.actions(), scale));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace advscore
