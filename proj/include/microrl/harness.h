#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "microrl/learners.h"
#include "microrl/scenario.h"

namespace microrl {

const char* versionString();

/// Bad configuration or arguments; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite parameters or rewards; maps to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

// Sliding window of the training win rate.
constexpr int kWinRateWindow = 400;

struct RunConfig {
  std::string scenario = "m5v5";
  std::string learner = "zo"; // zo | dqn | pg | heuristic name
  std::string opponent = "c";
  std::uint64_t seed = 0;
  long episodes = 1000;
  int workers = 1;
  std::string out = "runs/default";
  int hidden = kEmbeddingDim;
  int skipFrames = 0; // 0 keeps the scenario's value
  long evalEvery = 0; // 0 disables periodic evaluation
  int evalBattles = 100;
  int finalEvalBattles = 100;
  long checkpointEvery = 0; // 0 writes only the initial and final checkpoints
  double stopWinRate = 0;   // stop once the full-window win rate reaches it
  LearnerConfig hyper = LearnerConfig::defaults(LearnerKind::ZeroOrder);

  bool heuristicLearner() const;
  void validate() const; // throws UsageError

  nlohmann::json toJson() const;
  // Unknown keys are rejected; absent keys keep learner-specific defaults.
  static RunConfig fromJson(const nlohmann::json& j);
};

/// Reads a JSON config file; throws UsageError.
nlohmann::json readConfigFile(const std::string& path);

struct MetricsRow {
  long episode = 0;
  std::uint64_t spawnSeed = 0;
  bool win = false;
  double reward = 0;
  int windows = 0;
  int frames = 0;
  double exploration = 0;
  double slidingWinRate = 0;
};

std::string metricsHeader();
std::string formatMetricsRow(const MetricsRow& row);

/// Running mean of the last `window` outcomes.
class SlidingWinRate {
 public:
  explicit SlidingWinRate(int window = kWinRateWindow) : window_(window) {}
  void push(bool win);
  double value() const;
  bool full() const {
    return static_cast<int>(recent_.size()) == window_;
  }

 private:
  int window_;
  std::vector<char> recent_;
  std::size_t head_ = 0;
  int wins_ = 0;
};

struct Interval {
  double lo = 0;
  double hi = 0;
};

/// 95% Wilson score interval for k successes out of n.
Interval wilsonInterval(long k, long n);

struct EvalConfig {
  std::string policy;   // checkpoint path or heuristic name
  std::string scenario = "m5v5";
  std::string opponent = "c";
  long battles = 1000;
  std::uint64_t seed = 0;
  int skipFrames = 0;
  int workers = 1;
};

struct EvalResult {
  long battles = 0;
  long wins = 0;
  long timeouts = 0;
  double winRate = 0;
  Interval interval;
  double meanReward = 0;
  double stdReward = 0;
  double meanFrames = 0;

  nlohmann::json toJson() const;
};

/// Test-mode evaluation of a parameter set. Never modifies `params`.
EvalResult evaluateParams(const ParameterSet<float>& params,
                          const ScenarioSpec& spec, const std::string& opponent,
                          long battles, std::uint64_t seed, int workers = 1);
EvalResult evaluateHeuristic(const std::string& name, const ScenarioSpec& spec,
                             const std::string& opponent, long battles,
                             std::uint64_t seed, int workers = 1);
/// Loads the checkpoint or heuristic named by `config.policy`.
EvalResult evaluate(const EvalConfig& config);

struct TrainResult {
  long episodes = 0;
  double slidingWinRate = 0;
  bool stoppedEarly = false;
  std::optional<EvalResult> finalEval;
  std::string finalCheckpoint;
};

struct TrainOptions {
  std::ostream* log = nullptr; // progress lines; null for silence
  long logEvery = 1000;
  bool writeFiles = true;      // false keeps everything in memory
};

/// Trains per `config`, writing config.json, manifest.json, metrics.csv,
/// timing.csv, eval.csv, checkpoints/ and summary.json under config.out.
/// Throws NumericError after writing a diagnostic checkpoint when training
/// diverges.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

struct SweepCell {
  nlohmann::json overrides;
  std::uint64_t seed = 0;
  std::string out;
  bool ok = false;
  std::string error;
  TrainResult result;
};

/// Cartesian product of `grid` (key -> list of values) applied on top of
/// `base`. Cell i trains with seed base.seed + i under base.out/cell_<i>.
/// A failing cell is recorded and the sweep continues. Returns cells ranked
/// by final evaluation win rate, best first.
std::vector<SweepCell> sweep(const RunConfig& base, const nlohmann::json& grid,
                             const TrainOptions& options = {});

/// Expands a grid into override objects in row-major key order.
std::vector<nlohmann::json> expandGrid(const nlohmann::json& grid);

struct BenchResult {
  long episodes = 0;
  double seconds = 0;
  double episodesPerMinute = 0;
  double meanWindows = 0;
};

/// Times `episodes` training episodes (rollout + update) of `config`.
BenchResult bench(const RunConfig& config, long episodes);

} // namespace microrl
