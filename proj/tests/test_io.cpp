#include <gtest/gtest.h>

#include <filesystem>

#include "advscore/evaluation.hpp"
#include "advscore/io.hpp"

using namespace advscore;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("advscore_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path fixture(const char* name) { return fs::path(ADVSCORE_FIXTURES) / name; }

}  // namespace

TEST(Io, FixtureTrace) {
  const auto traces = load_traces(fixture("cloud_trace.jsonl"), App::Cloud);
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_EQ(traces[0].user, "u1");
  ASSERT_EQ(traces[0].records.size(), 3u);
  EXPECT_EQ(traces[0].records[0], (TraceRecord{0, cloud::kAsk, 20.0, 0.0}));
  EXPECT_EQ(traces[0].records[1], (TraceRecord{1, cloud::kDeploy, 15.0, 0.0}));
  EXPECT_EQ(traces[0].records[2].action, cloud::kWait);
  EXPECT_FALSE(traces[0].good.has_value());
  // Quota follows the asks: 10 initial plus 20.
  const auto rec = trace_records(App::Cloud, traces[0], EnvConfig::defaults(App::Cloud));
  EXPECT_EQ(rec[1].max_quota, 30.0);
}

TEST(Io, TraceParsingEdgeCases) {
  TempDir tmp;
  const auto p = tmp.path / "t.jsonl";
  write_file_atomic(p, "");
  EXPECT_TRUE(load_traces(p, App::Bank).empty());

  write_file_atomic(p,
                    "{\"user\":\"b\",\"step\":5,\"action\":\"repay\",\"amount\":1}\n"
                    "\n"
                    "{\"user\":\"a\",\"step\":2,\"action\":\"consume\",\"amount\":3,\"label\":\"bad\"}\n"
                    "{\"user\":\"b\",\"step\":1,\"action\":\"in-out\",\"amount\":2,\"amount2\":4}\n");
  const auto t = load_traces(p, App::Bank);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].user, "b");
  EXPECT_EQ(t[0].records[0].step, 1);
  EXPECT_EQ(t[0].records[0].amount2, 4.0);
  EXPECT_EQ(t[0].records[1].step, 5);
  EXPECT_EQ(t[1].good, false);

  write_file_atomic(p,
                    "{\"user\":\"a\",\"step\":0,\"action\":\"repay\",\"amount\":1}\n"
                    "{\"user\":\"a\",\"step\":1,\"action\":\"borrow\",\"amount\":1}\n");
  try {
    load_traces(p, App::Bank);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("borrow"), std::string::npos);
  }
  write_file_atomic(p, "{\"user\":\"a\",\"step\":0,\"action\":\"repay\",\"amount\":-1}\n");
  EXPECT_THROW(load_traces(p, App::Bank), DataError);
  write_file_atomic(p, "{\"user\":\"a\",\"step\":0,\"action\":\"repay\"\n");
  EXPECT_THROW(load_traces(p, App::Bank), DataError);
  write_file_atomic(p, "{\"user\":\"a\",\"action\":\"repay\"}\n");
  EXPECT_THROW(load_traces(p, App::Bank), DataError);
  write_file_atomic(p, "{\"user\":\"a\",\"step\":0,\"action\":\"repay\",\"label\":\"meh\"}\n");
  EXPECT_THROW(load_traces(p, App::Bank), DataError);
  EXPECT_THROW(load_traces(tmp.path / "missing.jsonl", App::Bank), DataError);
}

TEST(Io, TraceRoundTrip) {
  TempDir tmp;
  for (App app : {App::Cloud, App::Bank}) {
    const auto traces = synth_labeled_traces(app, 2, 2, 4, 15);
    const auto p = tmp.path / "rt.jsonl";
    write_file_atomic(p, traces_to_jsonl(app, traces));
    EXPECT_EQ(load_traces(p, app), traces);
  }
}

TEST(Io, CorpusRoundTrip) {
  TempDir tmp;
  FrozenCorpus c{App::Bank,
                 {{{bank::kRepay, 1.5, 0}, {bank::kInOut, 2.0, 3.0}}, {{bank::kInactive, 0, 0}, {bank::kConsume, 0.25, 0}}}};
  write_file_atomic(tmp.path / "c.jsonl", corpus_to_jsonl(c));
  const auto back = load_corpus(tmp.path / "c.jsonl", App::Bank);
  EXPECT_EQ(back.trajectories, c.trajectories);
  EXPECT_EQ(content_hash(back), content_hash(c));
}

TEST(Io, ParamsAndConfigsRoundTrip) {
  auto phi = ScoringParams::uniform(App::Cloud);
  phi.weights[2] = 0.7;
  phi.modules[4] = {1.25, 0.3};
  EXPECT_EQ(scoring_params_from_json(to_json(phi)), phi);

  auto env = EnvConfig::defaults(App::Bank);
  env.window = 12;
  env.credit_limit = 55;
  EXPECT_EQ(to_json(env_config_from_json(to_json(env), App::Bank)), to_json(env));
  EXPECT_EQ(env_config_from_json(nullptr, App::Cloud).window, 30);

  PpoConfig ppo;
  ppo.lr_actor = 3e-4;
  ppo.minibatch = 64;
  EXPECT_EQ(to_json(ppo_config_from_json(to_json(ppo))), to_json(ppo));

  EnhanceConfig enh;
  enh.max_iters = 7;
  EXPECT_EQ(to_json(enhance_config_from_json(to_json(enh))), to_json(enh));

  Json bad = to_json(phi);
  bad["weights"] = {1.0, 2.0};
  EXPECT_THROW(scoring_params_from_json(bad), DataError);
  bad = to_json(phi);
  bad["weights"][0] = "heavy";
  EXPECT_THROW(scoring_params_from_json(bad), DataError);
}

TEST(Io, AttackerCheckpointRoundTrip) {
  Rng rng(8), roll(9);
  Attacker a(App::Bank, PpoConfig{}, rng);
  auto env = EnvConfig::defaults(App::Bank);
  env.max_episode_len = 10;
  a.config().episodes_per_cycle = 2;
  a.train_cycle(ScoringParams::uniform(App::Bank), env, {}, roll);
  const auto j = attacker_to_json(a);
  const auto b = attacker_from_json(j);
  EXPECT_EQ(b.policy(), a.policy());
  EXPECT_EQ(b.epoch(), a.epoch());
  EXPECT_EQ(attacker_to_json(b), j);

  TempDir tmp;
  write_json(tmp.path / "theta.json", j);
  EXPECT_EQ(load_attacker(tmp.path / "theta.json").policy(), a.policy());

  auto broken = j;
  broken["version"] = 2;
  EXPECT_THROW(attacker_from_json(broken), DataError);
  broken.erase("version");
  EXPECT_THROW(attacker_from_json(broken), DataError);
}

TEST(Io, AtomicWriteReplacesWholeFile) {
  TempDir tmp;
  const auto p = tmp.path / "sub" / "f.txt";
  write_file_atomic(p, "first version, long\n");
  write_file_atomic(p, "second\n");
  EXPECT_EQ(read_file(p), "second\n");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(p.parent_path())) ++files;
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(read_json(p), DataError);
}

TEST(Io, CsvHelpers) {
  TempDir tmp;
  write_file_atomic(tmp.path / "x.csv", "a,b,\r\n1,2,3\n");
  const auto rows = read_csv(tmp.path / "x.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b", ""}));
  EXPECT_EQ(rows[1].size(), 3u);
  EXPECT_EQ(std::stod(csv_number(0.1)), 0.1);
  EXPECT_EQ(std::stod(csv_number(1.0 / 3.0)), 1.0 / 3.0);
}
