#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "microrl/engine.h"
#include "microrl/rng.h"

namespace microrl {

enum class Heuristic {
  RandNc,   // random target, kept until it or the attacker dies
  Noop,     // no orders; the team falls back to the default opponent script
  Closest,  // nearest enemy
  WeakestClosest,    // lowest hp+shield, ties by distance to own center
  NoOverkillNoChange // weakest-closest without overkill, targets never change
};

bool isHeuristicName(const std::string& name);
Heuristic parseHeuristic(const std::string& name); // throws invalid_argument
const char* heuristicName(Heuristic h);

/// Persistent target assignments for the "no change" heuristics.
struct HeuristicMemory {
  std::map<UnitId, UnitId> assignment;             // own unit -> enemy
  std::map<UnitId, std::vector<UnitId>> attackers; // enemy -> own units

  // Drops every entry that references a dead or missing unit.
  void prune(const FrameState& state);
  void assign(UnitId unit, UnitId target);
};

/// True when the attackers' combined single-volley damage covers the
/// target's remaining hp + shield.
bool overkillThreshold(const Rules& rules, const UnitState& target,
                       std::span<const UnitStats> attackers);

JointCommand heuristicAct(const FrameState& state, Team team, Heuristic kind,
                          HeuristicMemory& memory, Rng& rng);

class HeuristicPolicy : public CommandPolicy {
 public:
  HeuristicPolicy(Heuristic kind, Rng rng) : kind_(kind), rng_(rng) {}

  JointCommand act(const FrameState& state, Team team) override {
    return heuristicAct(state, team, kind_, memory_, rng_);
  }

  Heuristic kind() const {
    return kind_;
  }
  // noop hands its units to the default script.
  bool delegates() const {
    return kind_ == Heuristic::Noop;
  }
  const HeuristicMemory& memory() const {
    return memory_;
  }

 private:
  Heuristic kind_;
  HeuristicMemory memory_;
  Rng rng_;
};

// The scripted opponent used when none is configured.
constexpr Heuristic kDefaultOpponent = Heuristic::Closest;

std::unique_ptr<HeuristicPolicy> makeHeuristicPolicy(const std::string& name,
                                                     Rng rng);

} // namespace microrl
