#pragma once

#include <array>
#include <vector>

#include "microrl/engine.h"
#include "microrl/greedy_mdp.h"

namespace microrl {

// Distances are divided by this map scale.
constexpr double kDistanceScale = 32.0;
constexpr int kNumDistanceFeatures = 9;
constexpr int kNumSemanticSlots = 17;
// Candidate act type fed to the scoring stage: attack or move.
constexpr int kCandidateActWidth = 2;

/// Column layout of a feature row for a stat table with `numTypes` types:
///   enemy | type one-hot | hp shield cd | cur act one-hot | next act one-hot
///   | acting-unit type one-hot | 9 distances
struct FeatureLayout {
  int numTypes = 1;

  int enemy() const { return 0; }
  int type() const { return 1; }
  int hp() const { return 1 + numTypes; }
  int shield() const { return hp() + 1; }
  int cd() const { return hp() + 2; }
  int curAct() const { return hp() + 3; }
  int nextAct() const { return curAct() + kNumActTypes; }
  int actingType() const { return nextAct() + kNumActTypes; }
  int distances() const { return actingType() + numTypes; }
  int width() const { return distances() + kNumDistanceFeatures; }

  // Distance from source point a (own pos, cur target, next target) to
  // reference point b (acting pos, acting cur target, candidate target).
  int distance(int a, int b) const { return distances() + 3 * a + b; }
};

int featureWidth(const Rules& rules);
int featureWidth(int numTypes);

/// One row per living unit (ascending id), row-major.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
  std::vector<UnitId> rowUnits;
  ActType candidateActType = ActType::Move; // Attack or Move

  float at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  float& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  // One-hot of the candidate's act type: [attack, move].
  std::array<float, kCandidateActWidth> candidateOneHot() const {
    return candidateActType == ActType::Attack
               ? std::array<float, kCandidateActWidth>{1, 0}
               : std::array<float, kCandidateActWidth>{0, 1};
  }
};

/// The parts of the representation that don't depend on the candidate
/// command, computed once per decision and completed per candidate.
class GreedyFeatures {
 public:
  explicit GreedyFeatures(const GreedyState& g);

  int rows() const { return base_.rows; }
  int cols() const { return base_.cols; }

  FeatureMatrix complete(const Command& candidate) const;
  // Writes the completed rows into `out` (rows() * cols() floats).
  void completeInto(const Command& candidate, float* out) const;

 private:
  FeatureLayout layout_;
  FeatureMatrix base_;
  std::vector<std::array<Vec2, 3>> sources_; // per row
};

FeatureMatrix featurize(const GreedyState& g, const Command& candidate);

} // namespace microrl
