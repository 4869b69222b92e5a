#include "microrl/engine.h"

#include <algorithm>
#include <limits>

namespace microrl {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Fraction of the displacement `d` a circle of radius `r` centered at `p` may
// travel before touching the circle at `q`. Units already overlapping are
// only allowed to separate.
double allowedFraction(Vec2 p, Vec2 d, Vec2 q, double r) {
  Vec2 rel = p - q;
  double a = d.dot(d);
  double b = rel.dot(d);
  double c = rel.dot(rel) - r * r;
  if (a <= 0 || b >= 0) {
    return 1.0;
  }
  if (c <= 0) {
    return 0.0;
  }
  double disc = b * b - a * c;
  if (disc < 0) {
    return 1.0;
  }
  double t = (-b - std::sqrt(disc)) / a;
  // Stop a hair short so rounding never leaves the pair overlapping.
  return std::clamp(t - 1e-9, 0.0, 1.0);
}

void applyOrder(FrameState& s, UnitId id, const Command& cmd, Team team,
                StepEvents& events) {
  UnitState* u = s.find(id);
  if (u == nullptr) {
    throw EngineError("command for unknown unit " + std::to_string(id));
  }
  if (u->team != team) {
    throw EngineError("unit " + std::to_string(id) +
                      " is not controlled by the commanding team");
  }
  if (!u->alive()) {
    throw EngineError("command for dead unit " + std::to_string(id));
  }
  switch (cmd.type) {
    case ActType::NoCommand:
      u->curCmd.reset();
      return;
    case ActType::Move:
      u->curCmd = cmd;
      return;
    case ActType::Attack: {
      const UnitState* t = s.find(cmd.target);
      if (t == nullptr || t->team == u->team) {
        throw EngineError("unit " + std::to_string(id) +
                          " ordered to attack a non-enemy " +
                          std::to_string(cmd.target));
      }
      if (!t->alive()) {
        events.droppedCommands.push_back(id);
        u->curCmd = Command::hold(u->pos);
        return;
      }
      u->curCmd = Command::attack(t->id, t->pos);
      return;
    }
  }
}

void applyJoint(FrameState& s, const JointCommand& joint, Team team,
                StepEvents& events, std::vector<UnitId>& commanded) {
  for (const auto& [id, cmd] : joint) {
    if (std::find(commanded.begin(), commanded.end(), id) != commanded.end()) {
      throw EngineError("more than one command for unit " +
                        std::to_string(id));
    }
    commanded.push_back(id);
    applyOrder(s, id, cmd, team, events);
  }
}

} // namespace

void UnitStats::validate() const {
  auto fail = [this](const std::string& what) {
    throw EngineError("unit type '" + typeId + "': " + what);
  };
  if (!(maxHp > 0)) fail("max_hp must be positive");
  if (!(maxShield >= 0)) fail("max_shield must be non-negative");
  if (!(damage >= 0)) fail("damage must be non-negative");
  if (cooldownFrames < 1) fail("cooldown_frames must be at least 1");
  if (!(speed >= 0)) fail("speed must be non-negative");
  if (!(range >= 0)) fail("range must be non-negative");
  if (!(collisionRadius >= 0)) fail("collision_radius must be non-negative");
}

int Rules::typeIndex(const std::string& typeId) const {
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].typeId == typeId) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

Vec2 directionVector(Direction d) {
  switch (d) {
    case Direction::E: return {1, 0};
    case Direction::NE: return {kInvSqrt2, kInvSqrt2};
    case Direction::N: return {0, 1};
    case Direction::NW: return {-kInvSqrt2, kInvSqrt2};
    case Direction::W: return {-1, 0};
    case Direction::SW: return {-kInvSqrt2, -kInvSqrt2};
    case Direction::S: return {0, -1};
    case Direction::SE: return {kInvSqrt2, -kInvSqrt2};
    case Direction::Hold: return {0, 0};
  }
  return {0, 0};
}

Command Command::move(Direction d, Vec2 from, double step) {
  return {ActType::Move, kNoUnit, d, from + directionVector(d) * step};
}

const UnitState* FrameState::find(UnitId id) const {
  for (const auto& u : units) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

UnitState* FrameState::find(UnitId id) {
  for (auto& u : units) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

int FrameState::livingCount(Team team) const {
  return static_cast<int>(std::count_if(units.begin(), units.end(),
      [team](const UnitState& u) { return u.team == team && u.alive(); }));
}

int FrameState::livingCount() const {
  return static_cast<int>(std::count_if(units.begin(), units.end(),
      [](const UnitState& u) { return u.alive(); }));
}

std::vector<UnitId> FrameState::livingIds(Team team) const {
  std::vector<UnitId> ids;
  for (const auto& u : units) {
    if (u.team == team && u.alive()) ids.push_back(u.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

const char* outcomeName(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::AllyWin: return "ally_win";
    case Outcome::EnemyWin: return "enemy_win";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

std::vector<Command> legalCommands(const FrameState& state, UnitId unit) {
  const UnitState* u = state.find(unit);
  if (u == nullptr || !u->alive()) {
    throw EngineError("no living unit with id " + std::to_string(unit));
  }
  std::vector<Command> out;
  out.reserve(kNumDirections + state.units.size());
  for (int d = 0; d < kNumDirections; ++d) {
    auto dir = static_cast<Direction>(d);
    out.push_back(dir == Direction::Hold
                      ? Command::hold(u->pos)
                      : Command::move(dir, u->pos, state.rules->moveStep));
  }
  std::vector<const UnitState*> enemies;
  for (const auto& e : state.units) {
    if (e.team != u->team && e.alive()) enemies.push_back(&e);
  }
  std::sort(enemies.begin(), enemies.end(),
            [](const UnitState* a, const UnitState* b) { return a->id < b->id; });
  for (const UnitState* e : enemies) {
    out.push_back(Command::attack(e->id, e->pos));
  }
  return out;
}

double attackDamage(const Rules& rules, const UnitState& attacker,
                    const UnitState& target) {
  const UnitStats& a = rules.types[attacker.type];
  const UnitStats& t = rules.types[target.type];
  return a.damage * rules.multipliers(a.damageType, t.sizeClass);
}

bool inRange(const Rules& rules, const UnitState& attacker,
             const UnitState& target) {
  const UnitStats& a = rules.types[attacker.type];
  const UnitStats& t = rules.types[target.type];
  double gap =
      distance(attacker.pos, target.pos) - a.collisionRadius - t.collisionRadius;
  return gap <= a.range + 1e-9;
}

double absorbDamage(UnitState& target, double amount) {
  double before = target.hp + target.shield;
  double toShield = std::min(target.shield, amount);
  target.shield -= toShield;
  target.hp = std::max(0.0, target.hp - (amount - toShield));
  return before - (target.hp + target.shield);
}

double resolveAttack(const Rules& rules, UnitState& attacker,
                     UnitState& target) {
  if (!attacker.alive() || !target.alive() || attacker.cd > 0 ||
      !inRange(rules, attacker, target)) {
    return 0;
  }
  attacker.cd = rules.types[attacker.type].cooldownFrames;
  return absorbDamage(target, attackDamage(rules, attacker, target));
}

Outcome outcome(const FrameState& state) {
  int allies = state.livingCount(Team::Ally);
  int enemies = state.livingCount(Team::Enemy);
  if (allies == 0) return Outcome::EnemyWin; // includes mutual destruction
  if (enemies == 0) return Outcome::AllyWin;
  if (state.frame >= state.rules->frameCap) return Outcome::Timeout;
  return Outcome::Ongoing;
}

std::pair<FrameState, StepEvents> step(const FrameState& state,
                                       const JointCommand& joint,
                                       CommandPolicy* opponent,
                                       CommandPolicy* allyDelegate) {
  if (isTerminal(state)) {
    throw EngineError("step called on a terminal state");
  }
  const Rules& rules = *state.rules;
  FrameState next = state;
  StepEvents events;

  std::vector<UnitId> commanded;
  applyJoint(next, joint, Team::Ally, events, commanded);
  if (allyDelegate != nullptr) {
    JointCommand delegated;
    for (auto& entry : allyDelegate->act(next, Team::Ally)) {
      if (std::find(commanded.begin(), commanded.end(), entry.first) ==
          commanded.end()) {
        delegated.push_back(std::move(entry));
      }
    }
    applyJoint(next, delegated, Team::Ally, events, commanded);
  }
  if (opponent != nullptr) {
    applyJoint(next, opponent->act(next, Team::Enemy), Team::Enemy, events,
               commanded);
  }

  const std::size_t n = next.units.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return next.units[a].id < next.units[b].id;
  });

  std::vector<double> pending(n);
  std::vector<Vec2> displacement(n);
  auto indexOf = [&](UnitId id) -> std::size_t {
    for (std::size_t i = 0; i < n; ++i) {
      if (next.units[i].id == id) return i;
    }
    return n;
  };

  for (int f = 0; f < rules.skipFrames; ++f) {
    if (isTerminal(next)) break;
    std::fill(pending.begin(), pending.end(), 0.0);
    std::fill(displacement.begin(), displacement.end(), Vec2{});

    // Decide shots and intended moves against start-of-frame state.
    for (std::size_t i = 0; i < n; ++i) {
      UnitState& u = next.units[i];
      if (!u.alive() || !u.curCmd) continue;
      const UnitStats& us = rules.types[u.type];
      Command& cmd = *u.curCmd;
      Vec2 goal = cmd.targetPos;
      double stopShort = 0;
      if (cmd.type == ActType::Attack) {
        std::size_t ti = indexOf(cmd.target);
        if (ti == n || !next.units[ti].alive()) {
          cmd = Command::hold(u.pos);
          continue;
        }
        UnitState& t = next.units[ti];
        cmd.targetPos = t.pos;
        if (inRange(rules, u, t)) {
          if (u.cd == 0) {
            pending[ti] += attackDamage(rules, u, t);
            u.cd = us.cooldownFrames;
            events.shots.push_back(u.id);
          }
          continue;
        }
        goal = t.pos;
        stopShort = us.range + us.collisionRadius +
                    rules.types[t.type].collisionRadius;
      } else if (cmd.type != ActType::Move) {
        continue;
      }
      Vec2 delta = goal - u.pos;
      double dist = delta.norm();
      double travel = std::min(us.speed, dist - stopShort);
      if (travel > 0 && dist > 0) {
        displacement[i] = delta * (travel / dist);
      }
    }

    // Moves in ascending id order; ground units truncate on contact.
    for (std::size_t i : order) {
      UnitState& u = next.units[i];
      Vec2 d = displacement[i];
      if (!u.alive() || (d.x == 0 && d.y == 0)) continue;
      const UnitStats& us = rules.types[u.type];
      double frac = 1.0;
      if (!us.flying) {
        for (std::size_t j = 0; j < n && frac > 0; ++j) {
          const UnitState& o = next.units[j];
          if (j == i || !o.alive()) continue;
          const UnitStats& os = rules.types[o.type];
          if (os.flying) continue;
          frac = std::min(frac, allowedFraction(u.pos, d, o.pos,
                                                us.collisionRadius +
                                                    os.collisionRadius));
        }
      }
      u.pos = u.pos + d * frac;
    }

    // Simultaneous damage resolution and deaths at frame end.
    for (std::size_t i = 0; i < n; ++i) {
      if (pending[i] <= 0) continue;
      UnitState& t = next.units[i];
      double dealt = absorbDamage(t, pending[i]);
      (t.team == Team::Ally ? events.damageToAllies : events.damageToEnemies) +=
          dealt;
      if (!t.alive()) {
        events.deaths.push_back(t.id);
        t.curCmd.reset();
      }
    }
    for (auto& u : next.units) {
      if (u.cd > 0) --u.cd;
    }
    ++next.frame;
    ++events.framesSimulated;
  }

  // Attack orders report the target's latest position.
  for (auto& u : next.units) {
    if (!u.alive() || !u.curCmd || u.curCmd->type != ActType::Attack) continue;
    const UnitState* t = next.find(u.curCmd->target);
    if (t != nullptr && t->alive()) {
      u.curCmd->targetPos = t->pos;
    } else {
      u.curCmd = Command::hold(u.pos);
    }
  }
  return {std::move(next), std::move(events)};
}

} // namespace microrl
