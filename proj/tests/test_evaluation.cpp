#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "advscore/evaluation.hpp"

using namespace advscore;
namespace fs = std::filesystem;

namespace {

double plain_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

RoundArtifact trained_round(App app, std::uint64_t seed) {
  auto c = RunConfig::defaults(app);
  c.rounds = 1;
  c.seed = seed;
  c.attacker_cycles = 1;
  c.ppo.episodes_per_cycle = 2;
  c.env.max_episode_len = 10;
  c.test_episodes = 2;
  c.enhancer.max_iters = 2;
  return run(c).front();
}

}  // namespace

TEST(Evaluation, RmsePublishedTables) {
  const std::vector<double> cloud_real = {0.0148, 0.8361, 0.1491};
  EXPECT_NEAR(rmse(cloud_real, {0.0973, 0.8864, 0.0163}), 0.0948, 5e-4);
  const std::vector<double> bank_real = {0.0014, 0.0416, 0.5170, 0.4400};
  EXPECT_NEAR(rmse(bank_real, {0.2395, 0.2580, 0.2630, 0.2395}), 0.2281, 5e-4);
  EXPECT_NEAR(rmse(bank_real, {0.1223, 0.0076, 0.6537, 0.2164}), 0.1453, 5e-4);
}

TEST(Evaluation, RmseProperties) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(4), b(4);
    for (double& x : a) x = u(rng);
    for (double& x : b) x = u(rng);
    EXPECT_DOUBLE_EQ(rmse(a, b), rmse(b, a));
    EXPECT_DOUBLE_EQ(rmse(a, b), plain_rmse(a, b));
    EXPECT_EQ(rmse(a, a), 0.0);
    EXPECT_GT(rmse(a, b), 0.0);
  }
  EXPECT_THROW(rmse({1.0}, {1.0, 2.0}), UsageError);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), UsageError);
}

TEST(Evaluation, ActionDistribution) {
  const std::vector<std::vector<HybridAction>> trajs = {
      {{bank::kRepay, 2.0, 0}, {bank::kInOut, 4.0, 6.0}, {bank::kInactive, 0, 0}},
      {{bank::kRepay, 4.0, 0}, {bank::kConsume, 1.0, 0}},
  };
  const auto d = action_distribution(App::Bank, trajs);
  EXPECT_EQ(d.total, 5u);
  EXPECT_EQ(d.proportions, (std::vector<double>{0.4, 0.2, 0.2, 0.2}));
  EXPECT_DOUBLE_EQ(d.slot_mean[bank::kRepay], 3.0);
  EXPECT_DOUBLE_EQ(d.slot_std[bank::kRepay], 1.0);
  EXPECT_DOUBLE_EQ(d.slot_mean[4], 6.0);
  EXPECT_EQ(rmse(d, d), 0.0);
  EXPECT_NE(distribution_to_csv(d).find("proportion,repay,0.40000000000000002"), std::string::npos);
  EXPECT_THROW(action_distribution(App::Cloud, {{}}), UsageError);
  EXPECT_THROW(action_distribution(App::Cloud, {{{7, 0, 0}}}), DataError);

  Rng roll(2), init(3);
  const auto policy = HybridPolicy::init(App::Cloud, PpoConfig{}, init);
  std::vector<std::vector<HybridAction>> sampled;
  for (const auto& t : collect_trajectories(policy, ScoringParams::uniform(App::Cloud), EnvConfig::defaults(App::Cloud),
                                            3, 0.6, 1.0, roll)) {
    sampled.push_back(t.actions());
  }
  const auto p = action_distribution(App::Cloud, sampled).proportions;
  double sum = 0;
  for (double x : p) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Evaluation, RatioConventions) {
  EXPECT_EQ(ratio_of(2.0, 1.0), 2.0);
  EXPECT_EQ(ratio_of(0.0, 0.0), 1.0);
  EXPECT_FALSE(ratio_of(3.0, 0.0).has_value());
  EXPECT_EQ(ratio_of(0.0, 4.0), 0.0);
  EXPECT_EQ(ratio_of(-1.0, 2.0), -0.5);
}

TEST(Evaluation, UnchangedSystemHasRatioOne) {
  auto art = trained_round(App::Bank, 4);
  art.phi_after = art.phi_before;
  const auto env = EnvConfig::defaults(App::Bank);
  const auto s = competition_ratio(art, env, 2, 9, 3);
  ASSERT_EQ(s.ratio.size(), 3u);
  ASSERT_TRUE(s.mean.has_value());
  // Different streams for r^a and r^b, so only approximately 1 unless both are zero.
  for (std::size_t i = 0; i < 3; ++i) {
    if (s.before[i] == 0.0 && s.after[i] == 0.0) {
      EXPECT_EQ(*s.ratio[i], 1.0);
    }
  }
  EXPECT_GE(*s.variance, 0.0);
  EXPECT_THROW(competition_ratio(art, env, 2, 9, 0), UsageError);
}

TEST(Evaluation, CrossEvalMatchesDirectEvaluation) {
  const auto art = trained_round(App::Cloud, 5);
  const auto env = EnvConfig::defaults(App::Cloud);
  const auto m = cross_eval({art}, env, 3, 11);
  ASSERT_EQ(m.size, 1u);
  Rng rng = cross_eval_stream(11, 1, 0, 0);
  EXPECT_EQ(m.at(0, 0), evaluate_attacker(attacker_from_json(art.theta), art.phi_before, env, 3, rng));
  Rng again = cross_eval_stream(11, 1, 0, 0);
  const auto trajs = attacker_from_json(art.theta).rollout(art.phi_before, env, 3, again);
  double total = 0;
  for (const auto& t : trajs) total += t.total_reward();
  EXPECT_DOUBLE_EQ(m.at(0, 0), total / 3.0);
}

TEST(Evaluation, MatrixCsvRoundTrip) {
  CrossEvalMatrix m{2, {0.1, -2.5, 1e-17, 3.0}};
  const fs::path p = fs::temp_directory_path() / "advscore_matrix_rt.csv";
  write_file_atomic(p, matrix_to_csv(m));
  EXPECT_EQ(matrix_from_csv(p), m);
  write_file_atomic(p, "attacker,v0,v1\nv0,1,2\n");
  EXPECT_THROW(matrix_from_csv(p), DataError);
  write_file_atomic(p, "attacker,v0\nv0,abc\n");
  EXPECT_THROW(matrix_from_csv(p), DataError);
  fs::remove(p);
}

TEST(Evaluation, PrecisionAtK) {
  const auto env = EnvConfig::defaults(App::Cloud);
  const auto phi = ScoringParams::uniform(App::Cloud);
  auto traces = synth_labeled_traces(App::Cloud, 4, 0, 1, 20);
  EXPECT_EQ(precision_at_k(phi, traces, 3, env), 1.0);
  EXPECT_THROW(precision_at_k(phi, traces, 5, env), UsageError);
  EXPECT_THROW(precision_at_k(phi, traces, 0, env), UsageError);
  traces[1].good.reset();
  EXPECT_THROW(precision_at_k(phi, traces, 2, env), UsageError);

  // Hand-ranked case: k = 1 picks the single highest final score.
  auto mixed = synth_labeled_traces(App::Cloud, 2, 2, 3, 30);
  std::size_t best = 0;
  for (std::size_t i = 1; i < mixed.size(); ++i)
    if (final_score(phi, mixed[i], env) > final_score(phi, mixed[best], env)) best = i;
  EXPECT_EQ(precision_at_k(phi, mixed, 1, env), *mixed[best].good ? 1.0 : 0.0);
  const double all = precision_at_k(phi, mixed, 4, env);
  EXPECT_EQ(all, 0.5);
}

TEST(Evaluation, SyntheticTraces) {
  for (App app : {App::Cloud, App::Bank}) {
    const auto a = synth_labeled_traces(app, 3, 2, 7, 25);
    const auto b = synth_labeled_traces(app, 3, 2, 7, 25);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.size(), 5u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].records.size(), 25u);
      EXPECT_EQ(*a[i].good, i < 3);
      for (std::size_t t = 0; t < a[i].records.size(); ++t) EXPECT_EQ(a[i].records[t].step, static_cast<long>(t));
    }
    EXPECT_NE(synth_labeled_traces(app, 3, 2, 8, 25), a);
  }
  // Good cloud users keep their quota busier.
  const auto env = EnvConfig::defaults(App::Cloud);
  const auto phi = ScoringParams::uniform(App::Cloud);
  const auto t = synth_labeled_traces(App::Cloud, 10, 10, 2, 60);
  double good = 0, bad = 0;
  for (const auto& tr : t) {
    const double m = Scorer(phi, env.window).evaluate(trace_records(App::Cloud, tr, env)).modules[cloud::kUtilization];
    (*tr.good ? good : bad) += m;
  }
  EXPECT_GT(good, bad);
  EXPECT_THROW(synth_labeled_traces(App::Bank, -1, 0, 1), UsageError);
}

TEST(Evaluation, SvgOutput) {
  const auto line = line_chart_svg("a<b", {{"x", {1, 2, 3}}, {"y&z", {0, NAN, 5}}});
  EXPECT_EQ(line.rfind("<svg", 0), 0u);
  EXPECT_NE(line.find("</svg>"), std::string::npos);
  EXPECT_NE(line.find("a&lt;b"), std::string::npos);
  EXPECT_NE(line.find("y&amp;z"), std::string::npos);
  EXPECT_EQ(line.find("nan"), std::string::npos);
  const auto heat = heatmap_svg("m", CrossEvalMatrix{2, {0, 1, 2, 3}});
  std::size_t rects = 0;
  for (auto p = heat.find("<rect x="); p != std::string::npos; p = heat.find("<rect x=", p + 1)) ++rects;
  EXPECT_EQ(rects, 4u);
  EXPECT_NE(heat.find("</svg>"), std::string::npos);
}
