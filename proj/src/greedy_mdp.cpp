#include "microrl/greedy_mdp.h"

#include <algorithm>
#include <cmath>

namespace microrl {

const Command* GreedyState::decidedFor(UnitId id) const {
  for (const auto& [uid, cmd] : decided) {
    if (uid == id) return &cmd;
  }
  return nullptr;
}

GreedyState beginRound(const FrameState& state, Rng& rng) {
  if (isTerminal(state)) {
    throw GreedyMdpError("cannot start a decision round on a terminal state");
  }
  GreedyState g;
  g.base = &state;
  g.remaining = state.livingIds(Team::Ally);
  if (g.remaining.empty()) {
    throw GreedyMdpError("no living ally units");
  }
  g.decided.reserve(g.remaining.size());
  std::size_t pick = rng.index(g.remaining.size());
  g.actingUnit = g.remaining[pick];
  g.remaining.erase(g.remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  return g;
}

std::variant<GreedyState, CompletedJointAction> advanceUnchecked(
    GreedyState g, const Command& cmd, Rng& rng) {
  g.decided.emplace_back(g.actingUnit, cmd);
  if (g.remaining.empty()) {
    return CompletedJointAction{std::move(g.decided)};
  }
  std::size_t pick = rng.index(g.remaining.size());
  g.actingUnit = g.remaining[pick];
  g.remaining.erase(g.remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  return g;
}

std::variant<GreedyState, CompletedJointAction> advance(GreedyState g,
                                                        const Command& cmd,
                                                        Rng& rng) {
  auto legal = legalCommands(*g.base, g.actingUnit);
  bool ok = std::any_of(legal.begin(), legal.end(),
                        [&](const Command& c) { return c.sameOrder(cmd); });
  if (!ok) {
    throw GreedyMdpError("illegal command for unit " +
                         std::to_string(g.actingUnit));
  }
  return advanceUnchecked(std::move(g), cmd, rng);
}

double reward(const StepEvents& events) {
  return events.damageToEnemies - events.damageToAllies;
}

double scale(const FrameState& state) {
  return std::max(1, state.livingCount());
}

std::vector<double> cumulativeReturns(const RewardTrace& trace) {
  std::vector<double> out(trace.size());
  double acc = 0;
  for (std::size_t i = trace.size(); i-- > 0;) {
    acc += trace[i].reward;
    out[i] = acc;
  }
  return out;
}

std::vector<double> normalizedReturns(const RewardTrace& trace) {
  std::vector<double> out(trace.size());
  double next = 0;
  for (std::size_t i = trace.size(); i-- > 0;) {
    const auto& w = trace[i];
    if (!(w.zBefore > 0) || !(w.zAfter > 0)) {
      throw GreedyMdpError("reward scale must be positive");
    }
    next = (w.reward + w.zAfter * next) / w.zBefore;
    out[i] = next;
  }
  return out;
}

Battle::Battle(const ScenarioSpec& spec,
               std::unique_ptr<CommandPolicy> opponent, Rng& spawnRng)
    : spec_(&spec),
      opponent_(std::move(opponent)),
      state_(microrl::spawn(spec, spawnRng)) {}

StepEvents Battle::advance(const JointCommand& joint,
                           CommandPolicy* allyDelegate) {
  auto [next, events] = step(state_, joint, opponent_.get(), allyDelegate);
  state_ = std::move(next);
  return events;
}

} // namespace microrl
