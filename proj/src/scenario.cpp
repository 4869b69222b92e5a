#include "microrl/scenario.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace microrl {

namespace {

using nlohmann::json;

// Default stat table. Marine and Wraith figures are the game's; the Protoss
// entries only need to respect the qualitative matchups.
const char* kUnitTypes = R"({
  "marine":  {"max_hp": 40,  "max_shield": 0,  "damage": 6,  "damage_type": "normal",
              "size": "small", "cooldown": 15, "range": 4,   "speed": 0.25,
              "collision_radius": 0.2, "flying": false},
  "wraith":  {"max_hp": 120, "max_shield": 0,  "damage": 20, "damage_type": "normal",
              "size": "large", "cooldown": 22, "range": 5,   "speed": 0.4,
              "collision_radius": 0.0, "flying": true},
  "zealot":  {"max_hp": 100, "max_shield": 60, "damage": 16, "damage_type": "normal",
              "size": "small", "cooldown": 22, "range": 0.5, "speed": 0.3,
              "collision_radius": 0.3, "flying": false},
  "dragoon": {"max_hp": 100, "max_shield": 80, "damage": 20, "damage_type": "explosive",
              "size": "large", "cooldown": 30, "range": 4,   "speed": 0.3,
              "collision_radius": 0.45, "flying": false}
})";

const char* kMultipliers = R"({
  "normal":    {"small": 1.0, "medium": 1.0,  "large": 1.0},
  "explosive": {"small": 0.5, "medium": 0.75, "large": 1.0}
})";

struct Builtin {
  const char* name;
  std::vector<std::pair<const char*, int>> ally;
  std::vector<std::pair<const char*, int>> enemy;
  double spacing;
};

const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> all = {
      {"m5v5", {{"marine", 5}}, {{"marine", 5}}, 1.5},
      {"m15v16", {{"marine", 15}}, {{"marine", 16}}, 1.5},
      {"m15v15", {{"marine", 15}}, {{"marine", 15}}, 1.5},
      {"m18v18", {{"marine", 18}}, {{"marine", 18}}, 1.5},
      {"m18v20", {{"marine", 18}}, {{"marine", 20}}, 1.5},
      {"w5v5", {{"wraith", 5}}, {{"wraith", 5}}, 1.5},
      {"w15v13", {{"wraith", 15}}, {{"wraith", 13}}, 1.5},
      {"w15v15", {{"wraith", 15}}, {{"wraith", 15}}, 1.5},
      {"w15v17", {{"wraith", 15}}, {{"wraith", 17}}, 1.5},
      {"w18v18", {{"wraith", 18}}, {{"wraith", 18}}, 1.5},
      {"w18v20", {{"wraith", 18}}, {{"wraith", 20}}, 1.5},
      {"dragoons_zealots",
       {{"zealot", 3}, {"dragoon", 2}},
       {{"zealot", 3}, {"dragoon", 2}},
       2.0},
  };
  return all;
}

DamageType parseDamageType(const std::string& s) {
  if (s == "normal") return DamageType::Normal;
  if (s == "explosive") return DamageType::Explosive;
  throw ScenarioError("unknown damage_type '" + s + "'");
}

SizeClass parseSize(const std::string& s) {
  if (s == "small") return SizeClass::Small;
  if (s == "medium") return SizeClass::Medium;
  if (s == "large") return SizeClass::Large;
  throw ScenarioError("unknown size '" + s + "'");
}

const char* damageTypeName(DamageType t) {
  return t == DamageType::Normal ? "normal" : "explosive";
}

const char* sizeName(SizeClass s) {
  switch (s) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
  }
  return "?";
}

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ScenarioError(where + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ScenarioError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T fieldOr(const json& obj, const char* key, T fallback,
          const std::string& where) {
  return obj.contains(key) ? field<T>(obj, key, where) : fallback;
}

std::vector<ArmyEntry> parseArmy(const json& root, const char* key) {
  auto it = root.find(key);
  if (it == root.end() || !it->is_array() || it->empty()) {
    throw ScenarioError(std::string("'") + key +
                        "' must be a non-empty list of {type, count}");
  }
  std::vector<ArmyEntry> army;
  for (const auto& e : *it) {
    std::string where = std::string(key) + " entry";
    army.push_back({field<std::string>(e, "type", where),
                    field<int>(e, "count", where)});
  }
  return army;
}

} // namespace

int ScenarioSpec::allyCount() const {
  int n = 0;
  for (const auto& e : allyArmy) n += e.count;
  return n;
}

int ScenarioSpec::enemyCount() const {
  int n = 0;
  for (const auto& e : enemyArmy) n += e.count;
  return n;
}

void ScenarioSpec::validate() const {
  if (!rules) throw ScenarioError(name + ": no rules");
  if (rules->types.empty()) throw ScenarioError(name + ": empty stat table");
  for (const auto& t : rules->types) {
    try {
      t.validate();
    } catch (const EngineError& e) {
      throw ScenarioError(name + ": " + e.what());
    }
  }
  double maxRange = 0;
  for (const auto* army : {&allyArmy, &enemyArmy}) {
    if (army->empty()) throw ScenarioError(name + ": empty army");
    for (const auto& e : *army) {
      if (e.count <= 0) {
        throw ScenarioError(name + ": count for '" + e.typeId +
                            "' must be positive");
      }
      int ti = rules->typeIndex(e.typeId);
      if (ti < 0) {
        throw ScenarioError(name + ": unit type '" + e.typeId +
                            "' missing from unit_types");
      }
      const UnitStats& s = rules->types[ti];
      maxRange = std::max(maxRange, s.range + 2 * s.collisionRadius);
    }
  }
  if (rules->skipFrames < 1) throw ScenarioError(name + ": skip_frames < 1");
  if (rules->frameCap < 1) throw ScenarioError(name + ": frame_cap < 1");
  if (!(spawn.separation > maxRange + 2 * spawn.jitter)) {
    throw ScenarioError(name + ": spawn separation must exceed every range");
  }
  if (!(spawn.spacing > 0) || !(spawn.jitter >= 0)) {
    throw ScenarioError(name + ": bad spawn spacing/jitter");
  }
}

const std::vector<std::string>& builtinScenarioNames() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& b : builtins()) out.emplace_back(b.name);
    return out;
  }();
  return names;
}

std::string builtinScenarioText(const std::string& name) {
  for (const auto& b : builtins()) {
    if (name != b.name) continue;
    json all = json::parse(kUnitTypes);
    json root;
    root["name"] = b.name;
    json types = json::object();
    for (const auto* army : {&b.ally, &b.enemy}) {
      json list = json::array();
      for (const auto& [type, count] : *army) {
        list.push_back({{"type", type}, {"count", count}});
        types[type] = all[type];
      }
      root[army == &b.ally ? "ally" : "enemy"] = list;
    }
    root["unit_types"] = types;
    root["damage_multipliers"] = json::parse(kMultipliers);
    root["spawn"] = {{"separation", 16.0}, {"spacing", b.spacing},
                     {"jitter", 0.5}};
    root["frame_cap"] = 2000;
    root["skip_frames"] = 9;
    return root.dump(2);
  }
  throw ScenarioError("unknown built-in scenario '" + name + "'");
}

ScenarioSpec parseScenario(const std::string& jsonText) {
  json root;
  try {
    root = json::parse(jsonText);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("malformed scenario config: ") + e.what());
  }
  if (!root.is_object()) {
    throw ScenarioError("scenario config must be a JSON object");
  }
  ScenarioSpec spec;
  spec.name = fieldOr<std::string>(root, "name", "custom", "scenario");
  spec.allyArmy = parseArmy(root, "ally");
  spec.enemyArmy = parseArmy(root, "enemy");

  auto rules = std::make_shared<Rules>();
  auto types = root.find("unit_types");
  if (types == root.end() || !types->is_object()) {
    throw ScenarioError("'unit_types' must be an object keyed by type id");
  }
  // Stat table order: first appearance in the armies, then the rest.
  std::vector<std::string> order;
  for (const auto* army : {&spec.allyArmy, &spec.enemyArmy}) {
    for (const auto& e : *army) {
      if (std::find(order.begin(), order.end(), e.typeId) == order.end()) {
        order.push_back(e.typeId);
      }
    }
  }
  for (auto it = types->begin(); it != types->end(); ++it) {
    if (std::find(order.begin(), order.end(), it.key()) == order.end()) {
      order.push_back(it.key());
    }
  }
  for (const auto& id : order) {
    auto t = types->find(id);
    if (t == types->end()) continue; // reported by validate()
    std::string where = "unit type '" + id + "'";
    UnitStats s;
    s.typeId = id;
    s.maxHp = field<double>(*t, "max_hp", where);
    s.maxShield = fieldOr<double>(*t, "max_shield", 0.0, where);
    s.damage = field<double>(*t, "damage", where);
    s.damageType = parseDamageType(
        fieldOr<std::string>(*t, "damage_type", "normal", where));
    s.sizeClass = parseSize(fieldOr<std::string>(*t, "size", "small", where));
    s.cooldownFrames = field<int>(*t, "cooldown", where);
    s.range = field<double>(*t, "range", where);
    s.speed = field<double>(*t, "speed", where);
    s.flying = fieldOr<bool>(*t, "flying", false, where);
    s.collisionRadius =
        fieldOr<double>(*t, "collision_radius", s.flying ? 0.0 : 0.25, where);
    if (s.flying) s.collisionRadius = 0;
    rules->types.push_back(std::move(s));
  }
  if (auto m = root.find("damage_multipliers"); m != root.end()) {
    for (auto dt = m->begin(); dt != m->end(); ++dt) {
      DamageType type = parseDamageType(dt.key());
      for (auto sz = dt->begin(); sz != dt->end(); ++sz) {
        if (!sz->is_number()) {
          throw ScenarioError("damage_multipliers entries must be numbers");
        }
        rules->multipliers.table[static_cast<int>(type)]
                                [static_cast<int>(parseSize(sz.key()))] =
            sz->get<double>();
      }
    }
  }
  rules->frameCap = fieldOr<int>(root, "frame_cap", 2000, "scenario");
  rules->skipFrames = fieldOr<int>(root, "skip_frames", 9, "scenario");
  rules->moveStep = fieldOr<double>(root, "move_step", 3.0, "scenario");
  if (auto sp = root.find("spawn"); sp != root.end()) {
    spec.spawn.separation =
        fieldOr<double>(*sp, "separation", spec.spawn.separation, "spawn");
    spec.spawn.spacing =
        fieldOr<double>(*sp, "spacing", spec.spawn.spacing, "spawn");
    spec.spawn.jitter =
        fieldOr<double>(*sp, "jitter", spec.spawn.jitter, "spawn");
  }
  spec.rules = std::move(rules);
  spec.validate();
  return spec;
}

ScenarioSpec loadScenario(const std::string& source) {
  const auto& names = builtinScenarioNames();
  if (std::find(names.begin(), names.end(), source) != names.end()) {
    return parseScenario(builtinScenarioText(source));
  }
  auto first = source.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && source[first] == '{') {
    return parseScenario(source);
  }
  std::error_code ec;
  if (std::filesystem::is_regular_file(source, ec)) {
    std::ifstream in(source);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      return parseScenario(buf.str());
    } catch (const ScenarioError& e) {
      throw ScenarioError(source + ": " + e.what());
    }
  }
  throw ScenarioError("unknown scenario '" + source +
                      "' (not a built-in name or a readable file)");
}

ScenarioSpec withSkipFrames(const ScenarioSpec& spec, int skipFrames) {
  if (skipFrames < 1) throw ScenarioError("skip_frames must be at least 1");
  ScenarioSpec out = spec;
  auto rules = std::make_shared<Rules>(*spec.rules);
  rules->skipFrames = skipFrames;
  out.rules = std::move(rules);
  return out;
}

std::string scenarioToJson(const ScenarioSpec& spec) {
  json root;
  root["name"] = spec.name;
  for (const auto* army : {&spec.allyArmy, &spec.enemyArmy}) {
    json list = json::array();
    for (const auto& e : *army) {
      list.push_back({{"type", e.typeId}, {"count", e.count}});
    }
    root[army == &spec.allyArmy ? "ally" : "enemy"] = list;
  }
  json types = json::object();
  for (const auto& s : spec.rules->types) {
    types[s.typeId] = {{"max_hp", s.maxHp},
                       {"max_shield", s.maxShield},
                       {"damage", s.damage},
                       {"damage_type", damageTypeName(s.damageType)},
                       {"size", sizeName(s.sizeClass)},
                       {"cooldown", s.cooldownFrames},
                       {"range", s.range},
                       {"speed", s.speed},
                       {"collision_radius", s.collisionRadius},
                       {"flying", s.flying}};
  }
  root["unit_types"] = types;
  json mult = json::object();
  for (auto dt : {DamageType::Normal, DamageType::Explosive}) {
    for (auto sz : {SizeClass::Small, SizeClass::Medium, SizeClass::Large}) {
      mult[damageTypeName(dt)][sizeName(sz)] = spec.rules->multipliers(dt, sz);
    }
  }
  root["damage_multipliers"] = mult;
  root["spawn"] = {{"separation", spec.spawn.separation},
                   {"spacing", spec.spawn.spacing},
                   {"jitter", spec.spawn.jitter}};
  root["frame_cap"] = spec.rules->frameCap;
  root["skip_frames"] = spec.rules->skipFrames;
  root["move_step"] = spec.rules->moveStep;
  return root.dump(2);
}

FrameState spawn(const ScenarioSpec& spec, Rng& rng) {
  spec.validate();
  FrameState state;
  state.rules = spec.rules;
  state.rngStreamId = rng.seed();
  const Rules& rules = *spec.rules;
  UnitId nextId = 0;
  auto placeLine = [&](const std::vector<ArmyEntry>& army, Team team,
                       double y) {
    int total = 0;
    for (const auto& e : army) total += e.count;
    int slot = 0;
    for (const auto& e : army) {
      int type = rules.typeIndex(e.typeId);
      const UnitStats& s = rules.types[type];
      for (int k = 0; k < e.count; ++k, ++slot) {
        UnitState u;
        u.id = nextId++;
        u.team = team;
        u.type = type;
        double jx = spec.spawn.jitter > 0
                        ? rng.uniform(-spec.spawn.jitter, spec.spawn.jitter)
                        : 0.0;
        double jy = spec.spawn.jitter > 0
                        ? rng.uniform(-spec.spawn.jitter, spec.spawn.jitter)
                        : 0.0;
        u.pos = {(slot - (total - 1) / 2.0) * spec.spawn.spacing + jx, y + jy};
        u.hp = s.maxHp;
        u.shield = s.maxShield;
        u.cd = 0;
        state.units.push_back(u);
      }
    }
  };
  placeLine(spec.allyArmy, Team::Ally, 0.0);
  placeLine(spec.enemyArmy, Team::Enemy, spec.spawn.separation);

  for (std::size_t i = 0; i < state.units.size(); ++i) {
    const UnitStats& a = rules.types[state.units[i].type];
    if (a.flying) continue;
    for (std::size_t j = i + 1; j < state.units.size(); ++j) {
      const UnitStats& b = rules.types[state.units[j].type];
      if (b.flying) continue;
      if (distance(state.units[i].pos, state.units[j].pos) <
          a.collisionRadius + b.collisionRadius) {
        throw ScenarioError(spec.name +
                            ": formation does not fit without overlap");
      }
    }
  }
  return state;
}

} // namespace microrl
