#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "microrl/engine.h"
#include "microrl/rng.h"
#include "microrl/scenario.h"

namespace microrl {

/// Intermediate state of one sequential decision round: the frame state, the
/// commands already decided this round, and the unit that decides next.
struct GreedyState {
  const FrameState* base = nullptr;
  JointCommand decided;
  UnitId actingUnit = kNoUnit;
  std::vector<UnitId> remaining; // undecided living allies, ascending

  int decidedCount() const {
    return static_cast<int>(decided.size());
  }
  const Command* decidedFor(UnitId id) const;
};

/// Returned by advance() once every living ally has a command.
struct CompletedJointAction {
  JointCommand joint;
};

class GreedyMdpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Starts a round; the first acting unit is uniform among living allies.
GreedyState beginRound(const FrameState& state, Rng& rng);

/// Records `cmd` for the acting unit; the next one is drawn uniformly from
/// the remaining units. Throws GreedyMdpError on an illegal command.
std::variant<GreedyState, CompletedJointAction> advance(GreedyState g,
                                                        const Command& cmd,
                                                        Rng& rng);

// Same, skipping the legality check for callers that pick from
// legalCommands() themselves.
std::variant<GreedyState, CompletedJointAction> advanceUnchecked(
    GreedyState g, const Command& cmd, Rng& rng);

/// Damage inflicted minus damage incurred over one window.
double reward(const StepEvents& events);

/// Per-state reward scale: number of living units, floored at 1.
double scale(const FrameState& state);

struct WindowRecord {
  double reward = 0;
  double zBefore = 1; // z(s^t)
  double zAfter = 1;  // z(s^{t+1})
  bool terminal = false;
};

using RewardTrace = std::vector<WindowRecord>;

/// Undiscounted reward-to-go for each window.
std::vector<double> cumulativeReturns(const RewardTrace& trace);

/// Backward recursion n^t = (r^{t+1} + z(s^{t+1}) n^{t+1}) / z(s^t), with the
/// value after the last window taken as 0. Throws when some z <= 0.
std::vector<double> normalizedReturns(const RewardTrace& trace);

/// One battle against a scripted opponent: owns the current frame state and
/// the opponent's policy.
class Battle {
 public:
  Battle(const ScenarioSpec& spec, std::unique_ptr<CommandPolicy> opponent,
         Rng& spawnRng);

  const FrameState& state() const {
    return state_;
  }
  Outcome outcome() const {
    return microrl::outcome(state_);
  }
  bool done() const {
    return isTerminal(state_);
  }

  /// Advances one window and returns its events. `allyDelegate` commands
  /// allies left out of `joint`.
  StepEvents advance(const JointCommand& joint,
                     CommandPolicy* allyDelegate = nullptr);

  const ScenarioSpec& spec() const {
    return *spec_;
  }

 private:
  const ScenarioSpec* spec_;
  std::unique_ptr<CommandPolicy> opponent_;
  FrameState state_;
};

} // namespace microrl
