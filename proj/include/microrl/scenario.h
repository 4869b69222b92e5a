#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "microrl/engine.h"
#include "microrl/rng.h"

namespace microrl {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpawnLayout {
  double separation = 16.0; // distance between the two lines
  double spacing = 1.5;     // distance between neighbours within a line
  double jitter = 0.5;      // uniform +/- amplitude per coordinate
};

struct ArmyEntry {
  std::string typeId;
  int count = 0;
};

struct ScenarioSpec {
  std::string name;
  std::vector<ArmyEntry> allyArmy;
  std::vector<ArmyEntry> enemyArmy;
  std::shared_ptr<const Rules> rules; // stat table, multipliers, cadence
  SpawnLayout spawn;

  int frameCap() const {
    return rules->frameCap;
  }
  int skipFrames() const {
    return rules->skipFrames;
  }
  int allyCount() const;
  int enemyCount() const;

  // Checks the invariants that don't require parsing.
  void validate() const;
};

const std::vector<std::string>& builtinScenarioNames();

/// JSON text of a built-in scenario, in the same format as scenario files.
std::string builtinScenarioText(const std::string& name);

ScenarioSpec parseScenario(const std::string& jsonText);

/// `source` is a built-in name, a path to a scenario file, or JSON text.
ScenarioSpec loadScenario(const std::string& source);

/// Copy of `spec` with a different decision cadence.
ScenarioSpec withSkipFrames(const ScenarioSpec& spec, int skipFrames);

std::string scenarioToJson(const ScenarioSpec& spec);

/// Two facing lines: allies along y = 0, enemies along y = separation.
/// Unit ids are assigned allies first, in army order.
FrameState spawn(const ScenarioSpec& spec, Rng& rng);

} // namespace microrl
