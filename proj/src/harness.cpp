#include "microrl/harness.h"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "microrl/checkpoint.h"
#include "microrl/heuristics.h"

#ifndef MICRORL_VERSION
#define MICRORL_VERSION "0.0.0"
#endif

namespace microrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for Rng::stream(seed, tag, ...).
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamSpawn = 2,
  kStreamPolicy = 3,
  kStreamOpponent = 4,
  kStreamEval = 5,
  kStreamAlly = 6,
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

ScenarioSpec resolveScenario(const std::string& source, int skipFrames) {
  ScenarioSpec spec;
  try {
    spec = loadScenario(source);
  } catch (const ScenarioError& e) {
    throw UsageError(e.what());
  }
  return skipFrames > 0 ? withSkipFrames(spec, skipFrames) : spec;
}

std::unique_ptr<CommandPolicy> opponentPolicy(const std::string& name,
                                              Rng rng) {
  auto p = makeHeuristicPolicy(name, rng);
  if (p->delegates()) {
    // A silent opponent still needs orders; use the default script.
    return std::make_unique<HeuristicPolicy>(kDefaultOpponent, rng);
  }
  return p;
}

// Runs f(i) for i in [0, n) on `workers` threads, item i on thread i % workers.
template <typename F>
void parallelFor(long n, int workers, F f) {
  if (workers <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) f(i, 0);
    return;
  }
  int used = static_cast<int>(std::min<long>(workers, n));
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(used);
  for (int t = 0; t < used; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (long i = t; i < n; i += used) f(i, t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EvalResult summarize(const std::vector<EpisodeTrace>& traces) {
  EvalResult r;
  r.battles = static_cast<long>(traces.size());
  double sum = 0, sq = 0, frames = 0;
  for (const auto& t : traces) {
    r.wins += t.won() ? 1 : 0;
    r.timeouts += t.outcome == Outcome::Timeout ? 1 : 0;
    double rew = t.totalReward();
    sum += rew;
    sq += rew * rew;
    frames += t.frames;
  }
  if (r.battles > 0) {
    double n = static_cast<double>(r.battles);
    r.winRate = static_cast<double>(r.wins) / n;
    r.meanReward = sum / n;
    r.stdReward = std::sqrt(std::max(0.0, sq / n - r.meanReward * r.meanReward));
    r.meanFrames = frames / n;
  }
  r.interval = wilsonInterval(r.wins, r.battles);
  return r;
}

EpisodeTrace scriptedEpisode(const std::string& heuristic,
                             const ScenarioSpec& spec,
                             const std::string& opponent, Rng spawnRng,
                             Rng allyRng, Rng opponentRng) {
  Battle battle(spec, opponentPolicy(opponent, opponentRng), spawnRng);
  HeuristicPolicy ally(parseHeuristic(heuristic), allyRng);
  HeuristicPolicy delegate(kDefaultOpponent, allyRng);
  return playScripted(battle, ally, ally.delegates() ? &delegate : nullptr);
}

std::string checkpointName(long episode) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_%08ld.mrl", episode);
  return buf;
}

} // namespace

const char* versionString() {
  return "microrl " MICRORL_VERSION;
}

// ---------------------------------------------------------------------------
// RunConfig

bool RunConfig::heuristicLearner() const {
  return isHeuristicName(learner);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError(m); };
  if (scenario.empty()) fail("scenario must be set");
  if (!heuristicLearner() && learner != "zo" && learner != "dqn" &&
      learner != "pg") {
    fail("unknown learner '" + learner +
         "' (expected zo, dqn, pg or a heuristic name)");
  }
  if (!isHeuristicName(opponent)) fail("unknown opponent '" + opponent + "'");
  if (episodes < 0) fail("episodes must be >= 0");
  if (workers < 1) fail("workers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (skipFrames < 0) fail("skip_frames must be >= 0");
  if (evalEvery < 0 || checkpointEvery < 0) fail("cadences must be >= 0");
  if (evalBattles < 1) fail("eval_battles must be >= 1");
  if (finalEvalBattles < 0) fail("final_eval_battles must be >= 0");
  if (stopWinRate < 0 || stopWinRate > 1) fail("stop_win_rate must be in [0, 1]");
  if (out.empty()) fail("out must be set");
  const auto& h = hyper;
  if (!(h.lr > 0) || !std::isfinite(h.lr)) fail("lr must be positive");
  if (!(h.delta > 0)) fail("delta must be positive");
  if (!(h.tau > 0)) fail("tau must be positive");
  if (!(h.eps0 >= 0 && h.eps0 <= 1)) fail("eps0 must be in [0, 1]");
  // scheme 1 with eps_a = 0 is a constant epsilon; scheme 2 divides by eps_a
  if (h.epsScheme == EpsilonScheme::InverseSqrt ? !(h.epsA >= 0) : !(h.epsA > 0)) {
    fail("eps_a must be >= 0 for scheme 1 and > 0 for scheme 2");
  }
  if (!(h.momentum >= 0 && h.momentum < 1)) fail("momentum must be in [0, 1)");
  if (h.targetLag < 1) fail("target_lag must be >= 1");
}

json RunConfig::toJson() const {
  return json{
      {"scenario", scenario},
      {"learner", learner},
      {"opponent", opponent},
      {"seed", seed},
      {"episodes", episodes},
      {"workers", workers},
      {"out", out},
      {"hidden", hidden},
      {"skip_frames", skipFrames},
      {"eval_every", evalEvery},
      {"eval_battles", evalBattles},
      {"final_eval_battles", finalEvalBattles},
      {"checkpoint_every", checkpointEvery},
      {"stop_win_rate", stopWinRate},
      {"lr", hyper.lr},
      {"delta", hyper.delta},
      {"tau", hyper.tau},
      {"eps0", hyper.eps0},
      {"eps_a", hyper.epsA},
      {"eps_scheme", static_cast<int>(hyper.epsScheme)},
      {"optimizer", optimizerName(hyper.optimizer)},
      {"momentum", hyper.momentum},
      {"normalized", hyper.normalized},
      {"target_lag", hyper.targetLag},
  };
}

RunConfig RunConfig::fromJson(const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::vector<std::string> known = {
      "scenario", "learner", "opponent", "seed", "episodes", "workers", "out",
      "hidden", "skip_frames", "eval_every", "eval_battles",
      "final_eval_battles", "checkpoint_every", "stop_win_rate", "lr", "delta",
      "tau", "eps0", "eps_a", "eps_scheme", "optimizer", "momentum",
      "normalized", "target_lag"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key) && !j[key].is_null()) {
        field = j[key].get<std::remove_reference_t<decltype(field)>>();
      }
    };
    get("scenario", c.scenario);
    get("learner", c.learner);
    if (c.learner == "dqn" || c.learner == "pg") {
      c.hyper = LearnerConfig::defaults(parseLearnerKind(c.learner));
    }
    get("opponent", c.opponent);
    get("seed", c.seed);
    get("episodes", c.episodes);
    get("workers", c.workers);
    get("out", c.out);
    get("hidden", c.hidden);
    get("skip_frames", c.skipFrames);
    get("eval_every", c.evalEvery);
    get("eval_battles", c.evalBattles);
    get("final_eval_battles", c.finalEvalBattles);
    get("checkpoint_every", c.checkpointEvery);
    get("stop_win_rate", c.stopWinRate);
    get("lr", c.hyper.lr);
    get("delta", c.hyper.delta);
    get("tau", c.hyper.tau);
    get("eps0", c.hyper.eps0);
    get("eps_a", c.hyper.epsA);
    int scheme = static_cast<int>(c.hyper.epsScheme);
    get("eps_scheme", scheme);
    if (scheme != 1 && scheme != 2) throw UsageError("eps_scheme must be 1 or 2");
    c.hyper.epsScheme = static_cast<EpsilonScheme>(scheme);
    std::string opt = optimizerName(c.hyper.optimizer);
    get("optimizer", opt);
    c.hyper.optimizer = parseOptimizerKind(opt);
    get("momentum", c.hyper.momentum);
    get("normalized", c.hyper.normalized);
    get("target_lag", c.hyper.targetLag);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!c.heuristicLearner() &&
      (c.learner == "zo" || c.learner == "dqn" || c.learner == "pg")) {
    c.hyper.kind = parseLearnerKind(c.learner);
  }
  c.validate();
  return c;
}

json readConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics

std::string metricsHeader() {
  return "episode,spawn_seed,win,reward,windows,frames,exploration,"
         "sliding_win_rate";
}

std::string formatMetricsRow(const MetricsRow& r) {
  std::string s = std::to_string(r.episode);
  s += ',' + std::to_string(r.spawnSeed);
  s += r.win ? ",1" : ",0";
  s += ',' + fmt(r.reward);
  s += ',' + std::to_string(r.windows);
  s += ',' + std::to_string(r.frames);
  s += ',' + fmt(r.exploration);
  s += ',' + fmt(r.slidingWinRate);
  return s;
}

void SlidingWinRate::push(bool win) {
  if (static_cast<int>(recent_.size()) < window_) {
    recent_.push_back(win ? 1 : 0);
  } else {
    wins_ -= recent_[head_];
    recent_[head_] = win ? 1 : 0;
    head_ = (head_ + 1) % recent_.size();
  }
  wins_ += win ? 1 : 0;
}

double SlidingWinRate::value() const {
  return recent_.empty() ? 0.0
                         : static_cast<double>(wins_) /
                               static_cast<double>(recent_.size());
}

Interval wilsonInterval(long k, long n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  double nn = static_cast<double>(n);
  double p = static_cast<double>(k) / nn;
  double denom = 1 + z * z / nn;
  double center = (p + z * z / (2 * nn)) / denom;
  double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---------------------------------------------------------------------------
// Evaluation

json EvalResult::toJson() const {
  return json{{"battles", battles},
              {"wins", wins},
              {"timeouts", timeouts},
              {"win_rate", winRate},
              {"ci95_low", interval.lo},
              {"ci95_high", interval.hi},
              {"mean_reward", meanReward},
              {"std_reward", stdReward},
              {"mean_frames", meanFrames}};
}

EvalResult evaluateParams(const ParameterSet<float>& params,
                          const ScenarioSpec& spec, const std::string& opponent,
                          long battles, std::uint64_t seed, int workers) {
  if (battles <= 0) throw UsageError("evaluation needs at least one battle");
  if (params.shape().inputWidth != featureWidth(*spec.rules)) {
    throw UsageError("network feature width " +
                     std::to_string(params.shape().inputWidth) +
                     " does not match scenario '" + spec.name + "' width " +
                     std::to_string(featureWidth(*spec.rules)));
  }
  std::vector<EpisodeTrace> traces(battles);
  std::vector<CandidateScorer> scorers(std::max(1, workers));
  parallelFor(battles, workers, [&](long i, int t) {
    auto idx = static_cast<std::uint64_t>(i);
    Rng spawnRng = Rng::stream(seed, kStreamEval, idx, 0);
    Rng orderRng = Rng::stream(seed, kStreamEval, idx, 1);
    Battle battle(spec,
                  opponentPolicy(opponent, Rng::stream(seed, kStreamEval, idx, 2)),
                  spawnRng);
    EpisodeTrace tr = playEpisode(battle, greedyDecision(params, scorers[t]),
                                  orderRng);
    tr.windows.clear(); // only outcomes are needed
    traces[i] = std::move(tr);
  });
  return summarize(traces);
}

EvalResult evaluateHeuristic(const std::string& name, const ScenarioSpec& spec,
                             const std::string& opponent, long battles,
                             std::uint64_t seed, int workers) {
  if (battles <= 0) throw UsageError("evaluation needs at least one battle");
  if (!isHeuristicName(name)) throw UsageError("unknown heuristic '" + name + "'");
  std::vector<EpisodeTrace> traces(battles);
  parallelFor(battles, workers, [&](long i, int) {
    auto idx = static_cast<std::uint64_t>(i);
    traces[i] = scriptedEpisode(name, spec, opponent,
                                Rng::stream(seed, kStreamEval, idx, 0),
                                Rng::stream(seed, kStreamEval, idx, 3),
                                Rng::stream(seed, kStreamEval, idx, 2));
  });
  return summarize(traces);
}

EvalResult evaluate(const EvalConfig& config) {
  if (config.battles <= 0) throw UsageError("evaluation needs at least one battle");
  if (!isHeuristicName(config.opponent)) {
    throw UsageError("unknown opponent '" + config.opponent + "'");
  }
  ScenarioSpec spec = resolveScenario(config.scenario, config.skipFrames);
  if (isHeuristicName(config.policy)) {
    return evaluateHeuristic(config.policy, spec, config.opponent,
                             config.battles, config.seed, config.workers);
  }
  Checkpoint ckpt;
  try {
    ckpt = readCheckpoint(config.policy);
  } catch (const CheckpointError& e) {
    throw UsageError(e.what());
  }
  int expected = featureWidth(*spec.rules);
  if (static_cast<int>(ckpt.featureWidth) != expected) {
    throw UsageError("checkpoint feature width " +
                     std::to_string(ckpt.featureWidth) +
                     " does not match scenario '" + spec.name + "' width " +
                     std::to_string(expected));
  }
  auto params = ParameterSet<float>::zeros(ckpt.netShape());
  ckpt.getParameters(params);
  return evaluateParams(params, spec, config.opponent, config.battles,
                        config.seed, config.workers);
}

// ---------------------------------------------------------------------------
// Training

namespace {

class RunFiles {
 public:
  RunFiles(const RunConfig& config, const ScenarioSpec& spec, bool enabled)
      : enabled_(enabled), dir_(config.out) {
    if (!enabled_) return;
    std::error_code ec;
    fs::create_directories(dir_ / "checkpoints", ec);
    if (ec) throw UsageError("cannot create '" + dir_.string() + "': " + ec.message());
    writeText(dir_ / "config.json", config.toJson().dump(2) + "\n");
    json manifest{
        {"version", versionString()},
        {"master_seed", config.seed},
        {"init_seed", deriveSeed(config.seed, kStreamInit)},
        {"stream_scheme",
         "deriveSeed(master_seed, tag, episode, sub) with tags init=1 spawn=2 "
         "policy=3 opponent=4 eval=5 ally=6"},
        {"scenario", json::parse(scenarioToJson(spec))},
    };
    writeText(dir_ / "manifest.json", manifest.dump(2) + "\n");
    metrics_.open(dir_ / "metrics.csv", std::ios::binary | std::ios::trunc);
    timing_.open(dir_ / "timing.csv", std::ios::binary | std::ios::trunc);
    eval_.open(dir_ / "eval.csv", std::ios::binary | std::ios::trunc);
    metrics_ << metricsHeader() << '\n';
    timing_ << "episode,wall_seconds\n";
    eval_ << "episode,battles,win_rate,ci95_low,ci95_high,mean_reward\n";
  }

  void row(const MetricsRow& r, double wall) {
    if (!enabled_) return;
    metrics_ << formatMetricsRow(r) << '\n';
    timing_ << r.episode << ',' << fmt(wall) << '\n';
  }

  void evalRow(long episode, const EvalResult& e) {
    if (!enabled_) return;
    eval_ << episode << ',' << e.battles << ',' << fmt(e.winRate) << ','
          << fmt(e.interval.lo) << ',' << fmt(e.interval.hi) << ','
          << fmt(e.meanReward) << '\n';
  }

  std::string checkpoint(const Checkpoint& ckpt, const std::string& name) {
    if (!enabled_) return {};
    fs::path p = name.rfind("ckpt_", 0) == 0 ? dir_ / "checkpoints" / name
                                             : dir_ / name;
    writeCheckpoint(p.string(), ckpt);
    return p.string();
  }

  void summary(const json& j) {
    if (!enabled_) return;
    metrics_.flush();
    timing_.flush();
    eval_.flush();
    writeText(dir_ / "summary.json", j.dump(2) + "\n");
  }

 private:
  bool enabled_;
  fs::path dir_;
  std::ofstream metrics_, timing_, eval_;
};

json summaryJson(const RunConfig& config, const TrainResult& r,
                 const std::string& status) {
  json j{{"status", status},
         {"version", versionString()},
         {"scenario", config.scenario},
         {"learner", config.learner},
         {"opponent", config.opponent},
         {"seed", config.seed},
         {"episodes", r.episodes},
         {"sliding_win_rate", r.slidingWinRate},
         {"stopped_early", r.stoppedEarly},
         {"final_checkpoint", r.finalCheckpoint}};
  j["final_eval"] = r.finalEval ? r.finalEval->toJson() : json(nullptr);
  return j;
}

} // namespace

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  ScenarioSpec spec = resolveScenario(config.scenario, config.skipFrames);
  RunFiles files(config, spec, options.writeFiles);
  TrainResult result;
  SlidingWinRate sliding;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };
  auto log = [&](long episode, double exploration) {
    if (options.log == nullptr || options.logEvery <= 0) return;
    if (episode % options.logEvery != 0) return;
    *options.log << "episode " << episode << " sliding_win_rate "
                 << fmt(sliding.value()) << " exploration " << fmt(exploration)
                 << " elapsed " << fmt(elapsed()) << "s\n";
    options.log->flush();
  };
  auto record = [&](long episode, const EpisodeTrace& tr, double exploration) {
    if (!std::isfinite(tr.totalReward())) {
      throw NumericError("non-finite reward in episode " + std::to_string(episode));
    }
    sliding.push(tr.won());
    MetricsRow row;
    row.episode = episode;
    row.spawnSeed = deriveSeed(config.seed, kStreamSpawn,
                               static_cast<std::uint64_t>(episode));
    row.win = tr.won();
    row.reward = tr.totalReward();
    row.windows = static_cast<int>(tr.rewards.size());
    row.frames = tr.frames;
    row.exploration = exploration;
    row.slidingWinRate = sliding.value();
    files.row(row, elapsed());
    result.episodes = episode + 1;
    log(episode + 1, exploration);
  };
  auto reached = [&] {
    return config.stopWinRate > 0 && sliding.full() &&
           sliding.value() >= config.stopWinRate;
  };
  auto battleFor = [&](long e) {
    auto idx = static_cast<std::uint64_t>(e);
    Rng spawnRng = Rng::stream(config.seed, kStreamSpawn, idx);
    return std::make_unique<Battle>(
        spec,
        opponentPolicy(config.opponent,
                       Rng::stream(config.seed, kStreamOpponent, idx)),
        spawnRng);
  };

  if (config.heuristicLearner()) {
    for (long e = 0; e < config.episodes && !reached(); ++e) {
      auto idx = static_cast<std::uint64_t>(e);
      EpisodeTrace tr = scriptedEpisode(
          config.learner, spec, config.opponent,
          Rng::stream(config.seed, kStreamSpawn, idx),
          Rng::stream(config.seed, kStreamAlly, idx),
          Rng::stream(config.seed, kStreamOpponent, idx));
      record(e, tr, 0.0);
    }
    result.stoppedEarly = result.episodes < config.episodes;
    result.slidingWinRate = sliding.value();
    if (config.finalEvalBattles > 0) {
      result.finalEval = evaluateHeuristic(config.learner, spec, config.opponent,
                                           config.finalEvalBattles, config.seed,
                                           config.workers);
    }
    files.summary(summaryJson(config, result, "ok"));
    return result;
  }

  NetShape shape{featureWidth(*spec.rules), config.hidden, kCandidateActWidth};
  Rng initRng = Rng::stream(config.seed, kStreamInit);
  std::unique_ptr<Learner> learner = makeLearner(config.hyper, shape, initRng);
  auto snapshot = [&](const std::string& name) {
    return files.checkpoint(learner->checkpoint(spec.name), name);
  };
  result.finalCheckpoint = snapshot(checkpointName(0));

  const int workers = config.workers;
  std::vector<CandidateScorer> scorers(workers);
  long e = 0;
  while (e < config.episodes && !reached()) {
    long batch = std::min<long>(workers, config.episodes - e);
    std::vector<EpisodeTrace> traces(batch);
    double exploration = learner->exploration();
    const Learner& actor = *learner;
    parallelFor(batch, workers, [&](long i, int t) {
      auto idx = static_cast<std::uint64_t>(e + i);
      auto battle = battleFor(e + i);
      Rng policyRng = Rng::stream(config.seed, kStreamPolicy, idx);
      traces[i] = actor.runEpisode(*battle, policyRng, scorers[t]);
    });
    for (long i = 0; i < batch; ++i, ++e) {
      if (i > 0) exploration = learner->exploration();
      learner->update(traces[i]);
      if (!learner->params().allFinite()) {
        std::string path = snapshot("diagnostic.mrl");
        result.slidingWinRate = sliding.value();
        files.summary(summaryJson(config, result, "numeric_failure"));
        throw NumericError("non-finite parameters after episode " +
                           std::to_string(e) +
                           (path.empty() ? "" : "; diagnostic checkpoint " + path));
      }
      record(e, traces[i], exploration);
      traces[i] = EpisodeTrace{};
      if (config.checkpointEvery > 0 && (e + 1) % config.checkpointEvery == 0) {
        snapshot(checkpointName(e + 1));
      }
      if (config.evalEvery > 0 && (e + 1) % config.evalEvery == 0) {
        files.evalRow(e + 1, evaluateParams(learner->params(), spec,
                                            config.opponent, config.evalBattles,
                                            config.seed, workers));
      }
    }
  }

  result.stoppedEarly = result.episodes < config.episodes;
  result.slidingWinRate = sliding.value();
  if (result.episodes > 0) result.finalCheckpoint = snapshot("final.mrl");
  if (config.finalEvalBattles > 0) {
    result.finalEval = evaluateParams(learner->params(), spec, config.opponent,
                                      config.finalEvalBattles, config.seed,
                                      workers);
  }
  files.summary(summaryJson(config, result, "ok"));
  return result;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<json> expandGrid(const json& grid) {
  if (grid.is_null()) return {};
  if (!grid.is_object()) throw UsageError("grid must be a JSON object");
  if (grid.empty()) return {};
  std::vector<json> cells{json::object()};
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array()) {
      throw UsageError("grid entry '" + key + "' must be a list");
    }
    std::vector<json> next;
    for (const auto& cell : cells) {
      for (const auto& v : values) {
        json c = cell;
        c[key] = v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::vector<SweepCell> sweep(const RunConfig& base, const json& grid,
                             const TrainOptions& options) {
  base.validate();
  std::vector<json> overrides = expandGrid(grid);
  json baseJson = base.toJson();
  // Learner-specific defaults must follow a learner override.
  bool learnerVaries = grid.is_object() && grid.contains("learner");
  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    SweepCell cell;
    cell.overrides = overrides[i];
    cell.seed = base.seed + i;
    char name[32];
    std::snprintf(name, sizeof name, "cell_%03zu", i);
    cell.out = (fs::path(base.out) / name).string();
    try {
      json j = baseJson;
      if (learnerVaries) {
        for (const char* k : {"lr", "optimizer"}) j.erase(k);
      }
      for (const auto& [k, v] : overrides[i].items()) j[k] = v;
      j["seed"] = cell.seed;
      j["out"] = cell.out;
      RunConfig c = RunConfig::fromJson(j);
      cell.result = train(c, options);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  auto score = [](const SweepCell& c) {
    if (!c.ok) return -2.0;
    return c.result.finalEval ? c.result.finalEval->winRate : -1.0;
  };
  std::stable_sort(cells.begin(), cells.end(),
                   [&](const SweepCell& a, const SweepCell& b) {
                     return score(a) > score(b);
                   });

  if (options.writeFiles) {
    std::error_code ec;
    fs::create_directories(base.out, ec);
    json table = json::array();
    for (const auto& c : cells) {
      json row{{"overrides", c.overrides},
               {"seed", c.seed},
               {"out", c.out},
               {"status", c.ok ? "ok" : "failed"}};
      if (!c.ok) row["error"] = c.error;
      if (c.ok) {
        row["episodes"] = c.result.episodes;
        row["sliding_win_rate"] = c.result.slidingWinRate;
        row["final_eval"] =
            c.result.finalEval ? c.result.finalEval->toJson() : json(nullptr);
      }
      table.push_back(std::move(row));
    }
    writeText(fs::path(base.out) / "summary.json",
              json{{"version", versionString()},
                   {"base", baseJson},
                   {"grid", grid},
                   {"cells", table}}
                      .dump(2) +
                  "\n");
  }
  return cells;
}

// ---------------------------------------------------------------------------

BenchResult bench(const RunConfig& config, long episodes) {
  if (episodes <= 0) throw UsageError("bench needs at least one episode");
  if (config.heuristicLearner()) throw UsageError("bench needs a learner");
  config.validate();
  ScenarioSpec spec = resolveScenario(config.scenario, config.skipFrames);
  NetShape shape{featureWidth(*spec.rules), config.hidden, kCandidateActWidth};
  Rng initRng = Rng::stream(config.seed, kStreamInit);
  auto learner = makeLearner(config.hyper, shape, initRng);
  long windows = 0;
  auto start = std::chrono::steady_clock::now();
  for (long e = 0; e < episodes; ++e) {
    auto idx = static_cast<std::uint64_t>(e);
    Rng spawnRng = Rng::stream(config.seed, kStreamSpawn, idx);
    Battle battle(spec,
                  opponentPolicy(config.opponent,
                                 Rng::stream(config.seed, kStreamOpponent, idx)),
                  spawnRng);
    Rng policyRng = Rng::stream(config.seed, kStreamPolicy, idx);
    EpisodeTrace tr = learner->runEpisode(battle, policyRng);
    windows += static_cast<long>(tr.rewards.size());
    learner->update(tr);
  }
  BenchResult r;
  r.episodes = episodes;
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  r.episodesPerMinute = 60.0 * static_cast<double>(episodes) / r.seconds;
  r.meanWindows = static_cast<double>(windows) / static_cast<double>(episodes);
  return r;
}

} // namespace microrl
