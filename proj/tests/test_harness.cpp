#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "microrl/checkpoint.h"
#include "microrl/harness.h"

using namespace microrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratchDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("microrl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int countLines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

RunConfig tinyRun(const fs::path& out, long episodes) {
  RunConfig c;
  c.scenario = "m5v5";
  c.episodes = episodes;
  c.hidden = 8;
  c.out = out.string();
  c.finalEvalBattles = 0;
  return c;
}

int runCli(const std::string& args) {
  std::string cmd = std::string(MICRORL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("wilson interval") {
  Interval a = wilsonInterval(50, 100);
  CHECK(a.lo == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(a.hi == doctest::Approx(0.5962).epsilon(1e-3));
  Interval z = wilsonInterval(0, 10);
  CHECK(z.lo == 0.0);
  CHECK(z.hi == doctest::Approx(0.2775).epsilon(1e-3));
  Interval f = wilsonInterval(10, 10);
  CHECK(f.hi == doctest::Approx(1.0));
  CHECK(f.lo == doctest::Approx(0.7225).epsilon(1e-3));
}

TEST_CASE("sliding win rate") {
  SlidingWinRate s(4);
  CHECK(s.value() == 0.0);
  for (bool w : {true, true, false, false}) s.push(w);
  CHECK(s.full());
  CHECK(s.value() == 0.5);
  s.push(false);
  s.push(false);
  CHECK(s.value() == 0.0);
  s.push(true);
  CHECK(s.value() == 0.25);
}

TEST_CASE("config json round trip and validation") {
  RunConfig c;
  c.scenario = "w15v17";
  c.learner = "dqn";
  c.hyper = LearnerConfig::defaults(LearnerKind::Dqn);
  c.hyper.eps0 = 0.5;
  c.hyper.targetLag = 7;
  c.seed = 12345678901ULL;
  c.episodes = 77;
  RunConfig d = RunConfig::fromJson(c.toJson());
  CHECK(d.toJson() == c.toJson());

  RunConfig pg = RunConfig::fromJson(json{{"learner", "pg"}});
  CHECK(pg.hyper.kind == LearnerKind::Reinforce);
  CHECK(pg.hyper.optimizer == OptimizerKind::RmsProp);

  CHECK_THROWS_WITH_AS(RunConfig::fromJson(json{{"learnin_rate", 0.1}}),
                       doctest::Contains("learnin_rate"), UsageError);
  CHECK_THROWS_AS(RunConfig::fromJson(json{{"episodes", "many"}}), UsageError);
  RunConfig bad;
  bad.learner = "sarsa";
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = RunConfig{};
  bad.episodes = -1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  // constant epsilon under scheme 1, division by eps_a under scheme 2
  RunConfig constEps;
  constEps.hyper.epsA = 0;
  CHECK_NOTHROW(constEps.validate());
  constEps.hyper.epsScheme = EpsilonScheme::InverseLinear;
  CHECK_THROWS_AS(constEps.validate(), UsageError);
  bad = RunConfig{};
  bad.scenario = "nowhere";
  bad.out = (fs::temp_directory_path() / "microrl_test_nowhere").string();
  CHECK_THROWS_WITH_AS(train(bad), doctest::Contains("nowhere"), UsageError);
  fs::remove_all(bad.out);
}

TEST_CASE("metrics rows") {
  CHECK(metricsHeader() ==
        "episode,spawn_seed,win,reward,windows,frames,exploration,sliding_win_rate");
  MetricsRow r;
  r.episode = 3;
  r.spawnSeed = 99;
  r.win = true;
  r.reward = 12.5;
  r.windows = 40;
  r.frames = 360;
  r.exploration = 0.01;
  r.slidingWinRate = 0.25;
  CHECK(formatMetricsRow(r) == "3,99,1,12.5,40,360,0.01,0.25");
}

TEST_CASE("zero episodes writes only the initial checkpoint") {
  fs::path dir = scratchDir("zero");
  TrainResult r = train(tinyRun(dir, 0));
  CHECK(r.episodes == 0);
  CHECK(fs::exists(dir / "checkpoints" / "ckpt_00000000.mrl"));
  CHECK_FALSE(fs::exists(dir / "final.mrl"));
  CHECK(countLines(dir / "metrics.csv") == 1);
  CHECK(fs::exists(dir / "config.json"));
  json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["episodes"] == 0);
  CHECK(summary["status"] == "ok");
  fs::remove_all(dir);
}

TEST_CASE("training files are deterministic") {
  fs::path a = scratchDir("det_a"), b = scratchDir("det_b");
  RunConfig ca = tinyRun(a, 6), cb = tinyRun(b, 6);
  ca.checkpointEvery = cb.checkpointEvery = 3;
  train(ca);
  train(cb);
  CHECK(countLines(a / "metrics.csv") == 7);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "final.mrl") == slurp(b / "final.mrl"));
  CHECK(fs::exists(a / "checkpoints" / "ckpt_00000003.mrl"));
  CHECK(fs::exists(a / "checkpoints" / "ckpt_00000006.mrl"));
  json cfg = json::parse(slurp(a / "config.json"));
  CHECK(RunConfig::fromJson(cfg).episodes == 6);
  json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.contains("version"));

  // worker count does not change the rollouts of a single-episode batch
  fs::path c = scratchDir("det_c");
  RunConfig cc = tinyRun(c, 6);
  cc.checkpointEvery = 3;
  cc.workers = 2;
  train(cc);
  std::string ma = slurp(a / "metrics.csv"), mc = slurp(c / "metrics.csv");
  // the first line after the header comes from identical parameters
  auto secondLine = [](const std::string& s) {
    auto p = s.find('\n');
    return s.substr(p + 1, s.find('\n', p + 1) - p - 1);
  };
  CHECK(secondLine(ma) == secondLine(mc));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("heuristic learner runs the scripted loop") {
  fs::path dir = scratchDir("heur");
  RunConfig c = tinyRun(dir, 5);
  c.learner = "wc";
  c.finalEvalBattles = 10;
  TrainResult r = train(c);
  CHECK(r.episodes == 5);
  REQUIRE(r.finalEval);
  CHECK(r.finalEval->battles == 10);
  CHECK_FALSE(fs::exists(dir / "checkpoints" / "ckpt_00000000.mrl"));
  CHECK(countLines(dir / "metrics.csv") == 6);
  fs::remove_all(dir);
}

TEST_CASE("evaluation") {
  fs::path dir = scratchDir("eval");
  RunConfig c = tinyRun(dir, 2);
  train(c);
  fs::path ckpt = dir / "final.mrl";
  std::string before = slurp(ckpt);

  EvalConfig e;
  e.policy = ckpt.string();
  e.battles = 20;
  e.seed = 4;
  EvalResult r1 = evaluate(e);
  CHECK(r1.battles == 20);
  CHECK(r1.winRate == doctest::Approx(static_cast<double>(r1.wins) / 20));
  CHECK(r1.interval.lo <= r1.winRate);
  CHECK(r1.interval.hi >= r1.winRate);
  e.workers = 2;
  EvalResult r2 = evaluate(e);
  CHECK(r2.wins == r1.wins);
  CHECK(r2.meanReward == r1.meanReward);
  CHECK(slurp(ckpt) == before);

  // a marine-trained policy runs on another marine map
  e.scenario = "m15v16";
  e.battles = 3;
  CHECK(evaluate(e).battles == 3);

  e.scenario = "dragoons_zealots";
  CHECK_THROWS_WITH_AS(evaluate(e), doctest::Contains("23"), UsageError);
  try {
    evaluate(e);
  } catch (const UsageError& err) {
    CHECK(std::string(err.what()).find("21") != std::string::npos);
  }

  e.scenario = "m5v5";
  e.battles = 0;
  CHECK_THROWS_AS(evaluate(e), UsageError);
  e.battles = 5;
  e.policy = "wc";
  CHECK(evaluate(e).battles == 5);
  e.policy = (dir / "missing.mrl").string();
  CHECK_THROWS(evaluate(e));
  fs::remove_all(dir);
}

TEST_CASE("grid expansion and sweeps") {
  CHECK(expandGrid(json::object()).empty());
  auto cells = expandGrid(json{{"lr", {0.1, 0.01, 0.001}}});
  CHECK(cells.size() == 3);
  auto two = expandGrid(json{{"delta", {0.1, 0.01}}, {"normalized", {true, false}}});
  CHECK(two.size() == 4);
  CHECK_THROWS_AS(expandGrid(json{{"lr", 0.1}}), UsageError);

  fs::path dir = scratchDir("sweep");
  RunConfig base = tinyRun(dir, 2);
  base.finalEvalBattles = 4;
  auto result = sweep(base, json{{"delta", {0.1, 0.01, 0.001}}});
  CHECK(result.size() == 3);
  for (const auto& c : result) CHECK(c.ok);
  json summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["cells"].size() == 3);
  CHECK(fs::exists(dir / "cell_000" / "metrics.csv"));
  CHECK(fs::exists(dir / "cell_002" / "final.mrl"));

  fs::path dir2 = scratchDir("sweep_fail");
  RunConfig base2 = tinyRun(dir2, 1);
  auto failing = sweep(base2, json{{"lr", {0.01, -1.0}}});
  REQUIRE(failing.size() == 2);
  CHECK(failing[0].ok);
  CHECK_FALSE(failing[1].ok);
  CHECK_FALSE(failing[1].error.empty());
  json s2 = json::parse(slurp(dir2 / "summary.json"));
  CHECK(s2["cells"][1]["status"] == "failed");

  fs::path dir3 = scratchDir("sweep_empty");
  CHECK(sweep(tinyRun(dir3, 1), json::object()).empty());
  for (const auto& d : {dir, dir2, dir3}) fs::remove_all(d);
}

TEST_CASE("command-line exit codes") {
  fs::path dir = scratchDir("cli");
  std::string out = " --out " + dir.string();
  CHECK(runCli("--help") == 0);
  CHECK(runCli("--version") == 0);
  CHECK(runCli("") == 1);
  CHECK(runCli("frobnicate") == 1);
  CHECK(runCli("train --episodes 1 --hidden 8 --final-eval-battles 0 --quiet" + out) ==
        0);
  CHECK(fs::exists(dir / "final.mrl"));
  CHECK(runCli("train --learner sarsa" + out) == 1);
  CHECK(runCli("train --scenario nowhere" + out) == 1);
  CHECK(runCli("train --episodes many" + out) == 1);
  CHECK(runCli("eval --policy " + (dir / "final.mrl").string() + " --battles 2") == 0);
  CHECK(runCli("eval --policy " + (dir / "final.mrl").string() +
               " --scenario dragoons_zealots --battles 2") == 1);
  CHECK(runCli("eval --battles 2") == 1);
  // a learning rate large enough to overflow the parameters
  CHECK(runCli("train --episodes 3 --hidden 8 --lr 1e39 --final-eval-battles 0 --quiet" +
               out) == 2);
  CHECK(fs::exists(dir / "diagnostic.mrl"));
  fs::remove_all(dir);
}

} // TEST_SUITE
