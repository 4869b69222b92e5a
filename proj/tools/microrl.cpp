// Command-line front end: train, eval, sweep, bench.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "microrl/checkpoint.h"
#include "microrl/harness.h"

using namespace microrl;
using nlohmann::json;

namespace {

// Flags shared by every subcommand that builds a RunConfig. Unset flags leave
// the config file (or the defaults) alone.
struct RunFlags {
  std::string config;
  std::optional<std::string> scenario, learner, opponent, out, optimizer;
  std::optional<std::uint64_t> seed;
  std::optional<long> episodes, evalEvery, checkpointEvery;
  std::optional<int> workers, hidden, skipFrames, evalBattles, finalEvalBattles,
      epsScheme, targetLag;
  std::optional<double> lr, delta, tau, eps0, epsA, momentum, stopWinRate;
  std::optional<bool> normalized;

  void add(CLI::App* app, bool withEpisodes = true) {
    app->add_option("--config", config, "JSON run config");
    app->add_option("--scenario", scenario, "built-in name, file, or JSON");
    app->add_option("--learner", learner, "zo, dqn, pg, or a heuristic");
    app->add_option("--opponent", opponent, "scripted opponent heuristic");
    app->add_option("--seed", seed, "master seed");
    if (withEpisodes) app->add_option("--episodes", episodes, "episode budget");
    app->add_option("--out", out, "output directory");
    app->add_option("--workers", workers, "parallel rollout workers");
    app->add_option("--hidden", hidden, "layer width");
    app->add_option("--skip-frames", skipFrames, "frames per decision window");
    app->add_option("--eval-every", evalEvery, "episodes between evaluations");
    app->add_option("--eval-battles", evalBattles, "battles per evaluation");
    app->add_option("--final-eval-battles", finalEvalBattles,
                    "battles in the final evaluation (0 skips it)");
    app->add_option("--checkpoint-every", checkpointEvery,
                    "episodes between checkpoints");
    app->add_option("--stop-win-rate", stopWinRate,
                    "stop once the sliding win rate reaches this value");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--delta", delta, "ZO perturbation radius");
    app->add_option("--tau", tau, "Gibbs temperature");
    app->add_option("--eps0", eps0, "initial epsilon");
    app->add_option("--eps-a", epsA, "epsilon annealing rate");
    app->add_option("--eps-scheme", epsScheme, "epsilon schedule (1 or 2)");
    app->add_option("--optimizer", optimizer, "adagrad or rmsprop");
    app->add_option("--momentum", momentum, "RMSProp decay");
    app->add_option("--normalized", normalized,
                    "normalized cumulative rewards (true/false)");
    app->add_option("--target-lag", targetLag,
                    "DQN optimizations between target refreshes");
  }

  json merged() const {
    json j = config.empty() ? json::object() : readConfigFile(config);
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    auto set = [&j](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("scenario", scenario);
    set("learner", learner);
    set("opponent", opponent);
    set("seed", seed);
    set("episodes", episodes);
    set("out", out);
    set("workers", workers);
    set("hidden", hidden);
    set("skip_frames", skipFrames);
    set("eval_every", evalEvery);
    set("eval_battles", evalBattles);
    set("final_eval_battles", finalEvalBattles);
    set("checkpoint_every", checkpointEvery);
    set("stop_win_rate", stopWinRate);
    set("lr", lr);
    set("delta", delta);
    set("tau", tau);
    set("eps0", eps0);
    set("eps_a", epsA);
    set("eps_scheme", epsScheme);
    set("optimizer", optimizer);
    set("momentum", momentum);
    set("normalized", normalized);
    set("target_lag", targetLag);
    return j;
  }
};

void writeJson(const std::string& dir, const std::string& file, const json& j) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / file);
  if (!out) throw UsageError("cannot write into '" + dir + "'");
  out << j.dump(2) << '\n';
}

int runTrain(const RunFlags& flags, bool quiet) {
  RunConfig config = RunConfig::fromJson(flags.merged());
  TrainOptions options;
  if (!quiet) options.log = &std::cerr;
  TrainResult r = train(config, options);
  json j{{"episodes", r.episodes},
         {"sliding_win_rate", r.slidingWinRate},
         {"stopped_early", r.stoppedEarly},
         {"final_checkpoint", r.finalCheckpoint}};
  if (r.finalEval) j["final_eval"] = r.finalEval->toJson();
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int runSweep(const RunFlags& flags, const std::string& gridText, bool quiet) {
  json j = flags.merged();
  json grid = j.contains("grid") ? j["grid"] : json::object();
  j.erase("grid");
  if (!gridText.empty()) {
    try {
      grid = json::parse(gridText);
    } catch (const json::exception& e) {
      throw UsageError(std::string("--grid is not valid JSON: ") + e.what());
    }
  }
  RunConfig base = RunConfig::fromJson(j);
  TrainOptions options;
  if (!quiet) options.log = &std::cerr;
  auto cells = sweep(base, grid, options);
  for (const auto& c : cells) {
    std::cout << c.overrides.dump() << "  ";
    if (!c.ok) {
      std::cout << "FAILED: " << c.error << '\n';
    } else if (c.result.finalEval) {
      std::cout << "win_rate " << c.result.finalEval->winRate << '\n';
    } else {
      std::cout << "sliding_win_rate " << c.result.slidingWinRate << '\n';
    }
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unit micromanagement simulator and learners"};
  app.set_version_flag("--version", std::string(versionString()));
  app.require_subcommand(1);

  bool quiet = false;

  RunFlags trainFlags;
  auto* trainCmd = app.add_subcommand("train", "train a learner");
  trainFlags.add(trainCmd);
  trainCmd->add_flag("--quiet", quiet, "no progress output");

  EvalConfig evalConfig;
  std::string evalOut;
  auto* evalCmd = app.add_subcommand("eval", "evaluate a checkpoint or heuristic");
  evalCmd->add_option("--policy,--checkpoint", evalConfig.policy,
                      "checkpoint path or heuristic name")
      ->required();
  evalCmd->add_option("--scenario", evalConfig.scenario, "scenario");
  evalCmd->add_option("--opponent", evalConfig.opponent, "scripted opponent");
  evalCmd->add_option("--episodes,--battles", evalConfig.battles,
                      "number of battles");
  evalCmd->add_option("--seed", evalConfig.seed, "master seed");
  evalCmd->add_option("--skip-frames", evalConfig.skipFrames,
                      "frames per decision window");
  evalCmd->add_option("--workers", evalConfig.workers, "parallel workers");
  evalCmd->add_option("--out", evalOut, "directory for eval.json");

  RunFlags sweepFlags;
  std::string gridText;
  auto* sweepCmd = app.add_subcommand("sweep", "train and evaluate over a grid");
  sweepFlags.add(sweepCmd);
  sweepCmd->add_option("--grid", gridText,
                       R"(JSON object of lists, e.g. {"delta":[0.1,0.01]})");
  sweepCmd->add_flag("--quiet", quiet, "no progress output");

  RunFlags benchFlags;
  long benchEpisodes = 200;
  std::string benchOut;
  auto* benchCmd = app.add_subcommand("bench", "measure training throughput");
  benchFlags.add(benchCmd, false);
  benchCmd->add_option("--episodes", benchEpisodes, "episodes to time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*trainCmd) return runTrain(trainFlags, quiet);
    if (*evalCmd) {
      EvalResult r = evaluate(evalConfig);
      json j = r.toJson();
      j["policy"] = evalConfig.policy;
      j["scenario"] = evalConfig.scenario;
      j["opponent"] = evalConfig.opponent;
      j["seed"] = evalConfig.seed;
      j["version"] = versionString();
      if (!evalOut.empty()) writeJson(evalOut, "eval.json", j);
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
    if (*sweepCmd) return runSweep(sweepFlags, gridText, quiet);
    if (*benchCmd) {
      json j = benchFlags.merged();
      RunConfig config = RunConfig::fromJson(j);
      BenchResult r = bench(config, benchEpisodes);
      json out{{"scenario", config.scenario},
               {"learner", config.learner},
               {"episodes", r.episodes},
               {"seconds", r.seconds},
               {"episodes_per_minute", r.episodesPerMinute},
               {"mean_windows", r.meanWindows},
               {"version", versionString()}};
      if (benchFlags.out) writeJson(*benchFlags.out, "bench.json", out);
      std::cout << out.dump(2) << '\n';
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NetError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
