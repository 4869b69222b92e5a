#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace microrl {

using UnitId = std::int32_t;
constexpr UnitId kNoUnit = -1;

struct Vec2 {
  double x = 0;
  double y = 0;

  Vec2 operator+(Vec2 o) const {
    return {x + o.x, y + o.y};
  }
  Vec2 operator-(Vec2 o) const {
    return {x - o.x, y - o.y};
  }
  Vec2 operator*(double s) const {
    return {x * s, y * s};
  }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const {
    return x * o.x + y * o.y;
  }
  double norm() const {
    return std::sqrt(x * x + y * y);
  }
};

inline double distance(Vec2 a, Vec2 b) {
  return (a - b).norm();
}

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DamageType : std::uint8_t { Normal, Explosive };
enum class SizeClass : std::uint8_t { Small, Medium, Large };
enum class Team : std::uint8_t { Ally, Enemy };

inline Team opposing(Team t) {
  return t == Team::Ally ? Team::Enemy : Team::Ally;
}

struct UnitStats {
  std::string typeId;
  double maxHp = 1;
  double maxShield = 0;
  double damage = 0;
  DamageType damageType = DamageType::Normal;
  SizeClass sizeClass = SizeClass::Small;
  int cooldownFrames = 1;
  double range = 0; // walk-tiles, edge to edge
  double speed = 0; // walk-tiles per frame
  double collisionRadius = 0;
  bool flying = false;

  // Throws EngineError naming the offending field.
  void validate() const;
};

/// damage multiplier indexed by [damage type][target size class]
struct DamageMultipliers {
  std::array<std::array<double, 3>, 2> table{{
      {1.0, 1.0, 1.0},
      {0.5, 0.75, 1.0},
  }};

  double operator()(DamageType type, SizeClass size) const {
    return table[static_cast<int>(type)][static_cast<int>(size)];
  }
};

/// Everything the simulator needs besides the unit list. Shared read-only
/// between all states of a battle.
struct Rules {
  std::vector<UnitStats> types;
  DamageMultipliers multipliers;
  int skipFrames = 9;
  int frameCap = 2000;
  double moveStep = 3.0; // distance of a move order's destination

  int typeIndex(const std::string& typeId) const; // -1 when unknown
};

enum class ActType : std::uint8_t { Attack, Move, NoCommand };
constexpr int kNumActTypes = 3;

// Fixed order used for command enumeration. Hold is the ninth move.
enum class Direction : std::uint8_t { E, NE, N, NW, W, SW, S, SE, Hold };
constexpr int kNumDirections = 9;

Vec2 directionVector(Direction d); // unit length, zero for Hold

struct Command {
  ActType type = ActType::NoCommand;
  UnitId target = kNoUnit;        // attack only
  Direction dir = Direction::Hold; // move only
  Vec2 targetPos;                 // refreshed every frame for attacks

  static Command attack(UnitId target, Vec2 targetPos) {
    return {ActType::Attack, target, Direction::Hold, targetPos};
  }
  static Command move(Direction d, Vec2 from, double step);
  static Command hold(Vec2 pos) {
    return {ActType::Move, kNoUnit, Direction::Hold, pos};
  }

  // Identity of the order, ignoring the derived target position.
  bool sameOrder(const Command& o) const {
    return type == o.type && target == o.target && dir == o.dir;
  }
};

struct UnitState {
  UnitId id = kNoUnit;
  Team team = Team::Ally;
  int type = 0; // index into Rules::types
  Vec2 pos;
  double hp = 0;
  double shield = 0;
  int cd = 0;
  std::optional<Command> curCmd;

  bool alive() const {
    return hp > 0;
  }
};

struct FrameState {
  int frame = 0;
  std::vector<UnitState> units;
  std::uint64_t rngStreamId = 0;
  std::shared_ptr<const Rules> rules;

  const UnitStats& stats(const UnitState& u) const {
    return rules->types[u.type];
  }
  const UnitState* find(UnitId id) const;
  UnitState* find(UnitId id);
  int livingCount(Team team) const;
  int livingCount() const;
  std::vector<UnitId> livingIds(Team team) const; // ascending
};

using JointCommand = std::vector<std::pair<UnitId, Command>>;

/// Per-window accounting. Damage is counted as actual hp+shield removed.
struct StepEvents {
  int framesSimulated = 0;
  double damageToAllies = 0;
  double damageToEnemies = 0;
  std::vector<UnitId> deaths;
  std::vector<UnitId> shots;            // one entry per shot, by shooter
  std::vector<UnitId> droppedCommands; // attacks on dead targets, held instead

  double damageTo(Team t) const {
    return t == Team::Ally ? damageToAllies : damageToEnemies;
  }
};

enum class Outcome { Ongoing, AllyWin, EnemyWin, Timeout };
const char* outcomeName(Outcome o);

/// Anything that can command one team for a decision window.
class CommandPolicy {
 public:
  virtual ~CommandPolicy() = default;
  virtual JointCommand act(const FrameState& state, Team team) = 0;
};

/// 9 moves in Direction order followed by one attack per living enemy in
/// ascending id order.
std::vector<Command> legalCommands(const FrameState& state, UnitId unit);

double attackDamage(const Rules& rules, const UnitState& attacker,
                    const UnitState& target);
bool inRange(const Rules& rules, const UnitState& attacker,
             const UnitState& target);

// Shield first, overflow to hp. Returns the hp+shield actually removed.
double absorbDamage(UnitState& target, double amount);

/// Fires immediately if the target is alive, in range, and the attacker's
/// cooldown is 0; resets the cooldown. Returns damage applied (0 when the
/// shot is deferred).
double resolveAttack(const Rules& rules, UnitState& attacker,
                     UnitState& target);

Outcome outcome(const FrameState& state);

inline bool isTerminal(const FrameState& state) {
  return outcome(state) != Outcome::Ongoing;
}

/// Simulates one decision window of rules.skipFrames frames (fewer if the
/// battle ends). `joint` commands ally units; the opponent commands the enemy
/// team at window start. When `allyDelegate` is set, it commands every ally
/// unit that `joint` leaves out. Units without a new order keep their current
/// one.
std::pair<FrameState, StepEvents> step(const FrameState& state,
                                       const JointCommand& joint,
                                       CommandPolicy* opponent,
                                       CommandPolicy* allyDelegate = nullptr);

} // namespace microrl
