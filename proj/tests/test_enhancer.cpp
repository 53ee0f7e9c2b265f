#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "advscore/attacker.hpp"
#include "advscore/enhancer.hpp"
#include "support.hpp"

using namespace advscore;

namespace {

// Bank fixture whose rewards are smooth in Phi: consumes and repays only.
FrozenCorpus bank_fixture() {
  FrozenCorpus c;
  c.app = App::Bank;
  c.trajectories = {
      {{bank::kConsume, 3.0, 0}, {bank::kRepay, 1.0, 0}, {bank::kConsume, 0.5, 0}, {bank::kRepay, 2.0, 0}},
      {{bank::kConsume, 1.5, 0}, {bank::kInactive, 0, 0}, {bank::kRepay, 0.7, 0}},
  };
  return c;
}

ScoringParams bank_phi() {
  auto p = ScoringParams::uniform(App::Bank);
  p.weights = {0.4, 0.3, 0.2, 0.35};
  p.modules = {{0.6, 0.2}, {0.3, 0.5}, {0.8, 0.1}, {0.45, 0.3}};
  return p;
}

// Replay by hand: records follow the ledger, scores from the module oracle.
double hand_bank_reward(const ScoringParams& phi, const std::vector<ActionRecord>& records) {
  std::vector<ActionRecord> h;
  double total = 0, s_prev = oracle::score(phi, h, 30);
  for (const auto& r : records) {
    h.push_back(r);
    const double s = oracle::score(phi, h, 30);
    const double d = std::abs(s - s_prev), up = s > s_prev ? 1.0 : -1.0;
    if (r.action_type == 0) total += -up * r.amount * d;
    if (r.action_type == 1) total += up * r.amount * d;
    s_prev = s;
  }
  return total;
}

}  // namespace

TEST(Enhancer, EmptyAndAllWaitCorpora) {
  const auto env = EnvConfig::defaults(App::Cloud);
  const auto phi = ScoringParams::uniform(App::Cloud);
  FrozenCorpus empty{App::Cloud, {}};
  EXPECT_EQ(cumulative_reward(phi, empty, env), 0.0);
  FrozenCorpus wait{App::Cloud, {std::vector<HybridAction>(100, {cloud::kWait, 0, 0}),
                                 std::vector<HybridAction>(50, {cloud::kWait, 0, 0})}};
  EXPECT_EQ(cumulative_reward(phi, wait, env), 0.0);
  for (double g : grad_phi(phi, wait, env)) EXPECT_EQ(g, 0.0);
  const auto r = enhance(phi, wait, env);
  EXPECT_EQ(r.phi, phi);
  EXPECT_EQ(r.iterations, 0);
}

TEST(Enhancer, TwoStepHandReplayUnderTwoParameterSets) {
  const auto env = EnvConfig::defaults(App::Bank);
  FrozenCorpus c{App::Bank, {{{bank::kConsume, 2.0, 0}, {bank::kRepay, 1.5, 0}}}};
  const std::vector<ActionRecord> records = {{bank::kConsume, 2.0, 0, 1.0}, {bank::kRepay, 1.5, 0, 1.0}};
  const auto a = bank_phi();
  auto b = a;
  b.weights[0] = 1.3;
  b.modules[1].gamma = 0.9;
  EXPECT_NEAR(cumulative_reward(a, c, env), hand_bank_reward(a, records), 1e-12);
  EXPECT_NEAR(cumulative_reward(b, c, env), hand_bank_reward(b, records), 1e-12);
  EXPECT_NEAR(cumulative_reward(a, c, env) - cumulative_reward(b, c, env),
              hand_bank_reward(a, records) - hand_bank_reward(b, records), 1e-12);
  EXPECT_NE(cumulative_reward(a, c, env), cumulative_reward(b, c, env));
}

TEST(Enhancer, WeightGradientMatchesAnalyticBranchOracle) {
  const auto env = EnvConfig::defaults(App::Bank);
  const auto corpus = bank_fixture();
  const auto phi = bank_phi();
  const auto g = grad_phi(phi, corpus, env, 1e-4);

  // ds/dw_k = m_k, so each active branch contributes slope * sign(ds) * dm_k.
  std::vector<double> want(4, 0.0);
  for (const auto& traj : corpus.trajectories) {
    const auto steps = replay(phi, traj, env);
    std::vector<ActionRecord> h;
    for (const auto& st : steps) {
      const auto before = h;
      h.push_back(st.record);
      const double ds = st.score - st.score_prev;
      ASSERT_GT(std::abs(ds), 1e-6);  // away from kinks
      double slope = 0;
      if (st.record.action_type == bank::kRepay) slope = ds > 0 ? -st.record.amount : st.record.amount;
      if (st.record.action_type == bank::kConsume) slope = ds > 0 ? st.record.amount : -st.record.amount;
      const double sgn = ds > 0 ? 1.0 : -1.0;
      for (int k = 0; k < 4; ++k) {
        const auto& m = phi.modules[static_cast<std::size_t>(k)];
        want[static_cast<std::size_t>(k)] += slope * sgn *
            (oracle::module(App::Bank, k, m.gamma, m.lambda, h, 30) -
             oracle::module(App::Bank, k, m.gamma, m.lambda, before, 30));
      }
    }
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g[k], want[k], 1e-4);

  const auto frozen = frozen_branch_gradient(phi, corpus, env);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], frozen[i], 1e-4) << "coordinate " << i;
}

TEST(Enhancer, RichardsonOrder) {
  const auto env = EnvConfig::defaults(App::Bank);
  const auto corpus = bank_fixture();
  const auto phi = bank_phi();
  const auto g1 = grad_phi(phi, corpus, env, 4e-3);
  const auto g2 = grad_phi(phi, corpus, env, 2e-3);
  const auto g3 = grad_phi(phi, corpus, env, 1e-3);
  // Pick the coordinate with the largest truncation signal.
  std::size_t best = 0;
  for (std::size_t i = 0; i < g1.size(); ++i)
    if (std::abs(g1[i] - g2[i]) > std::abs(g1[best] - g2[best])) best = i;
  const double ratio = (g1[best] - g2[best]) / (g2[best] - g3[best]);
  EXPECT_NEAR(ratio, 4.0, 0.5);
}

TEST(Enhancer, OneSidedAtBoxBounds) {
  const auto env = EnvConfig::defaults(App::Bank);
  const auto corpus = bank_fixture();
  auto phi = bank_phi();
  phi.weights[2] = 0.0;        // at the lower bound
  phi.modules[0].lambda = 2.0;  // at the upper bound
  const double h = 1e-4;
  const auto g = grad_phi(phi, corpus, env, h);
  const double base = cumulative_reward(phi, corpus, env);
  auto up = phi;
  up.weights[2] = h;
  EXPECT_DOUBLE_EQ(g[2], (cumulative_reward(up, corpus, env) - base) / h);
  auto down = phi;
  down.modules[0].lambda = 2.0 - h;
  EXPECT_DOUBLE_EQ(g[8], (base - cumulative_reward(down, corpus, env)) / h);
}

TEST(Enhancer, FlattenRoundTripAndBox) {
  const auto phi = bank_phi();
  const auto x = flatten(phi);
  EXPECT_EQ(x.size(), 12u);
  EXPECT_EQ(x[4], 0.6);
  EXPECT_EQ(x[8], 0.2);
  EXPECT_EQ(unflatten(App::Bank, x), phi);
  auto wild = phi;
  wild.weights[0] = -3;
  wild.modules[1].gamma = 9;
  wild.modules[2].lambda = -1;
  const auto c = clamp_to_box(wild);
  EXPECT_EQ(c.weights[0], 0.0);
  EXPECT_EQ(c.modules[1].gamma, 5.0);
  EXPECT_EQ(c.modules[2].lambda, 0.0);
  EXPECT_THROW(unflatten(App::Cloud, x), UsageError);
}

TEST(Enhancer, DescentNeverRaisesLoss) {
  std::mt19937_64 rng(3);
  for (App app : {App::Cloud, App::Bank}) {
    Rng init(4), roll(5);
    const auto policy = HybridPolicy::init(app, PpoConfig{}, init);
    auto env = EnvConfig::defaults(app);
    env.max_episode_len = 40;
    const auto phi = ScoringParams::uniform(app);
    FrozenCorpus corpus{app, {}};
    for (const auto& t : collect_trajectories(policy, phi, env, 5, 0.6, 1.0, roll)) corpus.trajectories.push_back(t.actions());
    EnhanceConfig cfg;
    cfg.max_iters = 15;
    const auto r = enhance(phi, corpus, env, cfg);
    ASSERT_GE(r.loss_curve.size(), 1u);
    EXPECT_EQ(r.loss_curve.front(), cumulative_reward(phi, corpus, env));
    for (std::size_t i = 1; i < r.loss_curve.size(); ++i) EXPECT_LE(r.loss_curve[i], r.loss_curve[i - 1]);
    EXPECT_LE(r.loss_curve.back(), r.loss_curve.front());
    EXPECT_EQ(cumulative_reward(r.phi, corpus, env), r.loss_curve.back());
    EXPECT_EQ(clamp_to_box(r.phi), r.phi);
  }
}

TEST(Enhancer, LossEqualsAttackerRewardOnSameCorpus) {
  for (App app : {App::Cloud, App::Bank}) {
    Rng init(6), roll(7);
    const auto policy = HybridPolicy::init(app, PpoConfig{}, init);
    const auto env = EnvConfig::defaults(app);
    const auto phi = ScoringParams::uniform(app);
    const auto trajs = collect_trajectories(policy, phi, env, 4, 0.6, 1.0, roll);
    FrozenCorpus corpus{app, {}};
    double attacker_total = 0;
    for (const auto& t : trajs) {
      corpus.trajectories.push_back(t.actions());
      attacker_total += t.total_reward();
    }
    EXPECT_NEAR(cumulative_reward(phi, corpus, env), attacker_total, 1e-12);
    EXPECT_EQ(cumulative_reward(phi, corpus, env), cumulative_reward(phi, corpus, env));
  }
}

TEST(Enhancer, Errors) {
  const auto env = EnvConfig::defaults(App::Bank);
  EXPECT_THROW(cumulative_reward(ScoringParams::uniform(App::Cloud), bank_fixture(), env), UsageError);
  EXPECT_THROW(grad_phi(bank_phi(), bank_fixture(), env, 0.0), UsageError);
  EnhanceConfig bad;
  bad.lr = -1;
  EXPECT_THROW(enhance(bank_phi(), bank_fixture(), env, bad), UsageError);
}
