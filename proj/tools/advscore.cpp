// Command-line front end: training runs, single-player loops, scoring and
// evaluation reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "advscore/adversarial.hpp"
#include "advscore/evaluation.hpp"
#include "advscore/io.hpp"

namespace fs = std::filesystem;
using namespace advscore;

namespace {

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
  } else {
    write_file_atomic(out, content);
  }
}

std::string opt_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& name,
              std::optional<std::uint64_t> seed, std::optional<int> rounds, bool quiet) {
  RunConfig cfg = run_config_from_json(read_json(config_path), config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (!name.empty()) cfg.name = name;
  if (seed) cfg.seed = *seed;
  if (rounds) cfg.rounds = *rounds;
  if (cfg.output_dir.empty()) cfg.output_dir = "runs";
  RunCallbacks cb;
  if (!quiet) {
    cb.on_round = [](const RoundArtifact& a) {
      std::fprintf(stderr, "round %d: cycles=%zu test_reward=%.6g enhancer %.6g -> %.6g\n", a.round,
                   a.train_reward_curve.size(), a.test_reward, a.enhancer_loss_curve.front(),
                   a.enhancer_loss_curve.back());
    };
  }
  run(cfg, cb);
  std::cout << (fs::path(cfg.output_dir) / cfg.name).string() << "\n";
  return 0;
}

int cmd_attack(const std::string& phi_path, const std::string& config_path, int cycles, std::uint64_t seed,
               const std::string& out) {
  const ScoringParams phi = load_scoring_params(phi_path);
  RunConfig cfg = config_path.empty() ? RunConfig::defaults(phi.app)
                                      : run_config_from_json(read_json(config_path), config_path);
  if (cfg.app != phi.app) throw UsageError("config app does not match the scoring params");
  cfg.ppo.dtw_weight = cfg.effective_dtw_weight();
  cfg.ppo.max_episode_len = cfg.env.max_episode_len;
  std::vector<Sequence> real;
  if (!cfg.real_traces.empty()) real = encode_traces(cfg.app, load_traces(cfg.real_traces, cfg.app), cfg.ppo.action_scale);
  if (cfg.ppo.dtw_weight > 0.0 && real.empty()) throw UsageError("dtw_weight > 0 needs real traces");
  Rng init = make_stream(seed, "actor-init");
  Rng sampling = make_stream(seed, "sampling");
  Attacker attacker(cfg.app, cfg.ppo, init);
  std::vector<double> curve;
  for (int c = 0; c < cycles; ++c) {
    const auto rep = attacker.train_cycle(phi, cfg.env, real, sampling);
    curve.push_back(rep.mean_episode_reward);
    std::fprintf(stderr, "cycle %d: mean_reward=%.6g sigma=%.2f\n", c, rep.mean_episode_reward, rep.sigma);
    if (converged(curve, cfg.early_stop_rel, cfg.early_stop_span)) break;
  }
  emit(out, attacker_to_json(attacker).dump(2) + "\n");
  return 0;
}

int cmd_enhance(const std::string& phi_path, const std::string& corpus_path, const std::string& out,
                const std::string& loss_csv, std::optional<int> iters, std::optional<double> lr) {
  const ScoringParams phi = load_scoring_params(phi_path);
  const FrozenCorpus corpus = load_corpus(corpus_path, phi.app);
  if (corpus.empty()) throw DataError(corpus_path + ": corpus is empty");
  EnhanceConfig ec;
  if (iters) ec.max_iters = *iters;
  if (lr) ec.lr = *lr;
  const auto res = enhance(phi, corpus, EnvConfig::defaults(phi.app), ec);
  if (!loss_csv.empty()) {
    std::string s = "round,iter,R_value\n";
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) s += "0," + std::to_string(i) + "," + csv_number(res.loss_curve[i]) + "\n";
    write_file_atomic(loss_csv, s);
  }
  emit(out, to_json(res.phi).dump(2) + "\n");
  return 0;
}

int cmd_score(const std::string& phi_path, const std::string& traces_path, const std::string& out) {
  const ScoringParams phi = load_scoring_params(phi_path);
  const auto traces = load_traces(traces_path, phi.app);
  const EnvConfig env = EnvConfig::defaults(phi.app);
  const Scorer scorer(phi, env.window);
  std::string s = "user,step,action,score";
  for (int m = 0; m < module_count(phi.app); ++m) s += "," + std::string(module_name(phi.app, m));
  s += "\n";
  for (const auto& t : traces) {
    const auto records = trace_records(phi.app, t, env);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto r = scorer.evaluate(std::span<const ActionRecord>(records).first(i + 1));
      s += t.user + "," + std::to_string(t.records[i].step) + "," + std::string(action_name(phi.app, records[i].action_type)) +
           "," + csv_number(r.score);
      for (double v : r.modules) s += "," + csv_number(v);
      s += "\n";
    }
  }
  emit(out, s);
  return 0;
}

int cmd_simulate(const std::string& policy_path, const std::string& phi_path, int n, std::uint64_t seed,
                 const std::string& out) {
  const Attacker attacker = load_attacker(policy_path);
  const ScoringParams phi = load_scoring_params(phi_path);
  if (attacker.policy().app != phi.app) throw UsageError("policy and scoring params disagree on app");
  if (n < 0) throw UsageError("-n must be >= 0");
  EnvConfig env = EnvConfig::defaults(phi.app);
  env.max_episode_len = attacker.config().max_episode_len;
  Rng rng = make_stream(seed, "sampling");
  const auto trajs = attacker.rollout(phi, env, n, rng);
  emit(out, trajectories_to_jsonl(phi.app, trajs, phi, env));
  return 0;
}

int cmd_gen_traces(const std::string& app_name_str, int good, int bad, std::uint64_t seed, int length,
                   const std::string& out) {
  const App app = parse_app(app_name_str);
  emit(out, traces_to_jsonl(app, synth_labeled_traces(app, good, bad, seed, length, EnvConfig::defaults(app))));
  return 0;
}

fs::path output_in_run(const std::string& out, const std::string& run_dir, const std::string& file) {
  if (!out.empty()) return out;
  if (run_dir.empty()) throw UsageError("--out is required without --run");
  return fs::path(run_dir) / file;
}

int cmd_eval_ratio(const std::string& run_dir, int episodes, int repeats, std::uint64_t seed, const std::string& out) {
  const auto cfg = load_run_config(run_dir);
  const auto rounds = load_run(run_dir);
  std::string s = "round,r_before,r_after,ratio_mean,ratio_variance\n";
  Series ratio{"competition ratio", {}};
  for (const auto& a : rounds) {
    const auto st = competition_ratio(a, cfg.env, episodes, seed, repeats);
    double rb = 0.0, ra = 0.0;
    for (double v : st.before) rb += v / static_cast<double>(st.before.size());
    for (double v : st.after) ra += v / static_cast<double>(st.after.size());
    s += std::to_string(a.round) + "," + csv_number(rb) + "," + csv_number(ra) + "," + opt_number(st.mean) + "," +
         opt_number(st.variance) + "\n";
    ratio.values.push_back(st.mean ? *st.mean : std::numeric_limits<double>::quiet_NaN());
  }
  const auto path = output_in_run(out, run_dir, "ratio.csv");
  write_file_atomic(path, s);
  auto svg = path;
  write_file_atomic(svg.replace_extension(".svg"), line_chart_svg("Competition ratio per round", {ratio}));
  return 0;
}

int cmd_eval_matrix(const std::string& run_dir, int episodes, std::uint64_t seed, const std::string& out) {
  const auto cfg = load_run_config(run_dir);
  const auto m = cross_eval(load_run(run_dir), cfg.env, episodes, seed);
  const auto path = output_in_run(out, run_dir, "matrix.csv");
  write_file_atomic(path, matrix_to_csv(m));
  auto svg = path;
  write_file_atomic(svg.replace_extension(".svg"), heatmap_svg("Mean attacking reward", m));
  return 0;
}

int cmd_eval_dist(const std::string& run_dir, const std::string& traj, const std::string& real,
                  const std::string& app_str, const std::string& out) {
  std::optional<App> app;
  if (!app_str.empty()) app = parse_app(app_str);
  std::vector<std::vector<HybridAction>> sim;
  if (!traj.empty()) {
    if (!app) throw UsageError("--app is required with --traj");
    sim = load_corpus(traj, *app).trajectories;
  } else if (!run_dir.empty()) {
    const auto rounds = load_run(run_dir);
    app = rounds.back().phi_after.app;
    sim = rounds.back().corpus.trajectories;
  } else {
    throw UsageError("eval dist needs --traj or --run");
  }
  std::string s = "source,kind,name,value,std\n";
  const auto d_sim = action_distribution(*app, sim);
  auto add = [&](const std::string& source, const DistributionTable& d) {
    const auto body = distribution_to_csv(d);
    std::size_t pos = body.find('\n') + 1;
    while (pos < body.size()) {
      const std::size_t end = body.find('\n', pos);
      s += source + "," + body.substr(pos, end - pos) + "\n";
      pos = end + 1;
    }
  };
  add("simulated", d_sim);
  if (!real.empty()) {
    std::vector<std::vector<HybridAction>> r;
    for (const auto& t : load_traces(real, *app)) r.push_back(t.actions());
    const auto d_real = action_distribution(*app, r);
    add("real", d_real);
    s += "simulated,rmse,proportions," + csv_number(rmse(d_sim, d_real)) + ",\n";
  }
  emit(out, s);
  return 0;
}

int cmd_eval_prec(const std::string& run_dir, const std::string& traces_path, std::size_t k, int good, int bad,
                  std::uint64_t seed, const std::string& out) {
  if (run_dir.empty()) throw UsageError("eval prec needs --run");
  const auto cfg = load_run_config(run_dir);
  const auto rounds = load_run(run_dir);
  const ScoringParams& trained = rounds.back().phi_after;
  const auto traces = traces_path.empty() ? synth_labeled_traces(cfg.app, good, bad, seed, 60, cfg.env)
                                          : load_traces(traces_path, cfg.app);
  std::string s = "method,k,precision\n";
  s += "adversarial," + std::to_string(k) + "," + csv_number(precision_at_k(trained, traces, k, cfg.env, seed)) + "\n";
  s += "uniweight," + std::to_string(k) + "," +
       csv_number(precision_at_k(ScoringParams::uniform(cfg.app), traces, k, cfg.env, seed)) + "\n";
  emit(out, s);
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir) {
  const auto rounds = load_run(run_dir);
  const fs::path dir = out_dir.empty() ? fs::path(run_dir) : fs::path(out_dir);
  std::vector<Series> train;
  Series enh{"mean enhancer loss", {}}, test{"test reward", {}};
  for (const auto& a : rounds) {
    train.push_back({"v" + std::to_string(a.round), a.train_reward_curve});
    double m = 0.0;
    for (double v : a.enhancer_loss_curve) m += v / static_cast<double>(a.enhancer_loss_curve.size());
    enh.values.push_back(m);
    test.values.push_back(a.test_reward);
  }
  write_file_atomic(dir / "train_rewards.svg", line_chart_svg("Mean episode reward per cycle", train));
  write_file_atomic(dir / "enhancer_loss.svg", line_chart_svg("Enhancer loss per round", {enh}));
  write_file_atomic(dir / "test_rewards.svg", line_chart_svg("Attacker test reward per round", {test}));
  std::string s = "round,cycles,test_reward,enhancer_loss_first,enhancer_loss_last,enhancer_loss_mean\n";
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const auto& a = rounds[i];
    s += std::to_string(a.round) + "," + std::to_string(a.train_reward_curve.size()) + "," + csv_number(a.test_reward) +
         "," + csv_number(a.enhancer_loss_curve.front()) + "," + csv_number(a.enhancer_loss_curve.back()) + "," +
         csv_number(enh.values[i]) + "\n";
  }
  write_file_atomic(dir / "rounds.csv", s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial tuning of rule-based scoring systems"};
  app.require_subcommand(1);

  std::string config, out, name, phi, corpus, traces, policy, run_dir, traj, real, app_str = "bank", loss_csv;
  std::optional<std::uint64_t> seed_opt;
  std::optional<int> rounds_opt, iters_opt;
  std::optional<double> lr_opt;
  std::uint64_t seed = 0;
  int cycles = 50, n = 10, good = 50, bad = 50, length = 60, episodes = 10, repeats = 3;
  std::size_t k = 5;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "full adversarial run into a run directory");
  train->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output root (default: config output_dir or runs)");
  train->add_option("--name", name, "run name");
  train->add_option("--seed", seed_opt, "root seed override");
  train->add_option("--rounds", rounds_opt, "round count override");
  train->add_flag("--quiet", quiet, "no per-round progress");

  auto* attack = app.add_subcommand("attack", "train an attacker against a fixed scoring function");
  attack->add_option("--phi", phi, "scoring params JSON")->required()->check(CLI::ExistingFile);
  attack->add_option("--config", config, "run config JSON for PPO settings")->check(CLI::ExistingFile);
  attack->add_option("--cycles", cycles, "PPO cycles")->check(CLI::NonNegativeNumber);
  attack->add_option("--seed", seed, "root seed");
  attack->add_option("--out", out, "checkpoint path (default stdout)");

  auto* enh = app.add_subcommand("enhance", "tune scoring params on a frozen corpus");
  enh->add_option("--phi", phi, "scoring params JSON")->required()->check(CLI::ExistingFile);
  enh->add_option("--corpus", corpus, "corpus JSONL")->required()->check(CLI::ExistingFile);
  enh->add_option("--out", out, "output params (default stdout)");
  enh->add_option("--loss-csv", loss_csv, "per-iteration loss CSV");
  enh->add_option("--iters", iters_opt, "maximum descent iterations");
  enh->add_option("--lr", lr_opt, "learning rate");

  auto* score = app.add_subcommand("score", "step-by-step scores of traces");
  score->add_option("--phi", phi, "scoring params JSON")->required()->check(CLI::ExistingFile);
  score->add_option("--traces", traces, "trace JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out, "CSV path (default stdout)");

  auto* sim = app.add_subcommand("simulate", "roll out an attacker checkpoint");
  sim->add_option("--policy", policy, "attacker checkpoint JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--phi", phi, "scoring params JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("-n", n, "episodes");
  sim->add_option("--seed", seed, "root seed");
  sim->add_option("--out", out, "JSONL path (default stdout)");

  auto* gen = app.add_subcommand("gen-traces", "synthetic labeled traces");
  gen->add_option("--app", app_str, "cloud or bank");
  gen->add_option("--good", good, "good users")->check(CLI::NonNegativeNumber);
  gen->add_option("--bad", bad, "bad users")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", seed, "root seed");
  gen->add_option("--length", length, "steps per user")->check(CLI::PositiveNumber);
  gen->add_option("--out", out, "JSONL path (default stdout)");

  auto* eval = app.add_subcommand("eval", "metrics over a run directory");
  eval->require_subcommand(1);
  eval->add_option("--run", run_dir, "run directory");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out, "output path");
  auto* ratio = eval->add_subcommand("ratio", "competition ratio per round");
  ratio->add_option("--episodes", episodes, "episodes per estimate")->check(CLI::PositiveNumber);
  ratio->add_option("--repeats", repeats, "repeats")->check(CLI::PositiveNumber);
  auto* matrix = eval->add_subcommand("matrix", "cross-evaluation matrix");
  matrix->add_option("--episodes", episodes, "episodes per cell")->check(CLI::PositiveNumber);
  auto* dist = eval->add_subcommand("dist", "discrete action distribution and RMSE");
  dist->add_option("--traj", traj, "simulated trajectory JSONL")->check(CLI::ExistingFile);
  dist->add_option("--real", real, "real trace JSONL")->check(CLI::ExistingFile);
  dist->add_option("--app", app_str, "cloud or bank (with --traj)");
  auto* prec = eval->add_subcommand("prec", "precision@k against the uniform-weight baseline");
  prec->add_option("--traces", traces, "labeled trace JSONL (default: synthetic)")->check(CLI::ExistingFile);
  prec->add_option("-k", k, "top k")->check(CLI::PositiveNumber);
  prec->add_option("--good", good, "synthetic good users");
  prec->add_option("--bad", bad, "synthetic bad users");

  auto* report = app.add_subcommand("report", "SVG charts and a round summary for a run");
  report->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", out, "output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(config, out, name, seed_opt, rounds_opt, quiet);
    if (*attack) return cmd_attack(phi, config, cycles, seed, out);
    if (*enh) return cmd_enhance(phi, corpus, out, loss_csv, iters_opt, lr_opt);
    if (*score) return cmd_score(phi, traces, out);
    if (*sim) return cmd_simulate(policy, phi, n, seed, out);
    if (*gen) return cmd_gen_traces(app_str, good, bad, seed, length, out);
    if (*report) return cmd_report(run_dir, out);
    if (*eval) {
      if (*ratio) return cmd_eval_ratio(run_dir, episodes, repeats, seed, out);
      if (*matrix) return cmd_eval_matrix(run_dir, episodes, seed, out);
      if (*dist) return cmd_eval_dist(run_dir, traj, real, dist->count("--app") ? app_str : "", out);
      if (*prec) return cmd_eval_prec(run_dir, traces, k, good, bad, seed, out);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
