#include "microrl/heuristics.h"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace microrl {

namespace {

struct Named {
  const char* name;
  Heuristic kind;
};

constexpr Named kNames[] = {
    {"rand_nc", Heuristic::RandNc},
    {"noop", Heuristic::Noop},
    {"c", Heuristic::Closest},
    {"wc", Heuristic::WeakestClosest},
    {"nok_nc", Heuristic::NoOverkillNoChange},
};

std::vector<const UnitState*> living(const FrameState& s, Team team) {
  std::vector<const UnitState*> out;
  for (const auto& u : s.units) {
    if (u.team == team && u.alive()) out.push_back(&u);
  }
  std::sort(out.begin(), out.end(),
            [](const UnitState* a, const UnitState* b) { return a->id < b->id; });
  return out;
}

Vec2 centerOfMass(const std::vector<const UnitState*>& units) {
  Vec2 c;
  for (const auto* u : units) c = c + u->pos;
  return units.empty() ? c : c * (1.0 / static_cast<double>(units.size()));
}

const UnitState* closestTo(Vec2 p, const std::vector<const UnitState*>& enemies) {
  const UnitState* best = nullptr;
  double bestDist = std::numeric_limits<double>::infinity();
  for (const auto* e : enemies) { // ascending id, so ties keep the lowest
    double d = distance(p, e->pos);
    if (d < bestDist) {
      bestDist = d;
      best = e;
    }
  }
  return best;
}

// Enemies ordered weakest first; ties by distance to `center`, then id.
std::vector<const UnitState*> weakestOrder(std::vector<const UnitState*> enemies,
                                           Vec2 center) {
  std::stable_sort(enemies.begin(), enemies.end(),
                   [center](const UnitState* a, const UnitState* b) {
                     double ha = a->hp + a->shield;
                     double hb = b->hp + b->shield;
                     if (ha != hb) return ha < hb;
                     return distance(a->pos, center) < distance(b->pos, center);
                   });
  return enemies;
}

Command attackOrder(const UnitState& target) {
  return Command::attack(target.id, target.pos);
}

} // namespace

bool isHeuristicName(const std::string& name) {
  for (const auto& n : kNames) {
    if (name == n.name) return true;
  }
  return false;
}

Heuristic parseHeuristic(const std::string& name) {
  for (const auto& n : kNames) {
    if (name == n.name) return n.kind;
  }
  throw std::invalid_argument("unknown heuristic '" + name +
                              "' (expected rand_nc, noop, c, wc or nok_nc)");
}

const char* heuristicName(Heuristic h) {
  for (const auto& n : kNames) {
    if (n.kind == h) return n.name;
  }
  return "?";
}

void HeuristicMemory::prune(const FrameState& state) {
  auto alive = [&state](UnitId id) {
    const UnitState* u = state.find(id);
    return u != nullptr && u->alive();
  };
  for (auto it = assignment.begin(); it != assignment.end();) {
    if (!alive(it->first) || !alive(it->second)) {
      it = assignment.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = attackers.begin(); it != attackers.end();) {
    auto& list = it->second;
    UnitId target = it->first;
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](UnitId a) {
                                auto as = assignment.find(a);
                                return as == assignment.end() ||
                                       as->second != target;
                              }),
               list.end());
    if (!alive(target) || list.empty()) {
      it = attackers.erase(it);
    } else {
      ++it;
    }
  }
}

void HeuristicMemory::assign(UnitId unit, UnitId target) {
  assignment[unit] = target;
  attackers[target].push_back(unit);
}

bool overkillThreshold(const Rules& rules, const UnitState& target,
                       std::span<const UnitStats> attackers) {
  if (attackers.empty()) return false;
  const UnitStats& ts = rules.types[target.type];
  double volley = 0;
  for (const auto& a : attackers) {
    volley += a.damage * rules.multipliers(a.damageType, ts.sizeClass);
  }
  return volley >= target.hp + target.shield;
}

JointCommand heuristicAct(const FrameState& state, Team team, Heuristic kind,
                          HeuristicMemory& memory, Rng& rng) {
  JointCommand out;
  auto own = living(state, team);
  auto enemies = living(state, opposing(team));
  memory.prune(state);
  if (own.empty() || enemies.empty() || kind == Heuristic::Noop) {
    return out;
  }

  switch (kind) {
    case Heuristic::Noop:
      break;
    case Heuristic::Closest:
      for (const auto* u : own) {
        out.emplace_back(u->id, attackOrder(*closestTo(u->pos, enemies)));
      }
      break;
    case Heuristic::WeakestClosest: {
      const UnitState* target = weakestOrder(enemies, centerOfMass(own)).front();
      for (const auto* u : own) out.emplace_back(u->id, attackOrder(*target));
      break;
    }
    case Heuristic::RandNc:
      for (const auto* u : own) {
        if (!memory.assignment.contains(u->id)) {
          memory.assign(u->id, enemies[rng.index(enemies.size())]->id);
        }
        out.emplace_back(u->id,
                         attackOrder(*state.find(memory.assignment[u->id])));
      }
      break;
    case Heuristic::NoOverkillNoChange: {
      auto order = weakestOrder(enemies, centerOfMass(own));
      for (const auto* u : own) {
        if (!memory.assignment.contains(u->id)) {
          const UnitState* pick = nullptr;
          for (const auto* e : order) {
            std::vector<UnitStats> registered;
            if (auto it = memory.attackers.find(e->id);
                it != memory.attackers.end()) {
              for (UnitId a : it->second) {
                registered.push_back(state.stats(*state.find(a)));
              }
            }
            if (!overkillThreshold(*state.rules, *e, registered)) {
              pick = e;
              break;
            }
          }
          memory.assign(u->id, (pick != nullptr ? pick : order.front())->id);
        }
        out.emplace_back(u->id,
                         attackOrder(*state.find(memory.assignment[u->id])));
      }
      break;
    }
  }
  return out;
}

std::unique_ptr<HeuristicPolicy> makeHeuristicPolicy(const std::string& name,
                                                     Rng rng) {
  return std::make_unique<HeuristicPolicy>(parseHeuristic(name), rng);
}

} // namespace microrl
