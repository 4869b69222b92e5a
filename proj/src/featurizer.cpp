#include "microrl/featurizer.h"

#include <algorithm>
#include <cstring>

namespace microrl {

namespace {

int actIndex(const std::optional<Command>& cmd) {
  return cmd ? static_cast<int>(cmd->type)
             : static_cast<int>(ActType::NoCommand);
}

// Target position under the "no command" convention.
Vec2 targetOf(const std::optional<Command>& cmd, Vec2 pos) {
  if (!cmd || cmd->type == ActType::NoCommand) return pos;
  return cmd->targetPos;
}

} // namespace

int featureWidth(int numTypes) {
  return FeatureLayout{numTypes}.width();
}

int featureWidth(const Rules& rules) {
  return featureWidth(static_cast<int>(rules.types.size()));
}

GreedyFeatures::GreedyFeatures(const GreedyState& g) {
  const FrameState& s = *g.base;
  const Rules& rules = *s.rules;
  layout_.numTypes = static_cast<int>(rules.types.size());

  const UnitState* acting = s.find(g.actingUnit);
  if (acting == nullptr || !acting->alive()) {
    throw GreedyMdpError("acting unit is not alive");
  }
  std::array<Vec2, 2> refs = {acting->pos, targetOf(acting->curCmd, acting->pos)};

  std::vector<const UnitState*> living;
  for (const auto& u : s.units) {
    if (u.alive()) living.push_back(&u);
  }
  std::sort(living.begin(), living.end(),
            [](const UnitState* a, const UnitState* b) { return a->id < b->id; });

  base_.rows = static_cast<int>(living.size());
  base_.cols = layout_.width();
  base_.data.assign(static_cast<std::size_t>(base_.rows) * base_.cols, 0.0f);
  base_.rowUnits.reserve(living.size());
  sources_.reserve(living.size());

  for (int r = 0; r < base_.rows; ++r) {
    const UnitState& u = *living[r];
    const UnitStats& st = rules.types[u.type];
    base_.rowUnits.push_back(u.id);
    base_.at(r, layout_.enemy()) = u.team == Team::Enemy ? 1.0f : 0.0f;
    base_.at(r, layout_.type() + u.type) = 1.0f;
    base_.at(r, layout_.hp()) = static_cast<float>(u.hp / st.maxHp);
    base_.at(r, layout_.shield()) =
        st.maxShield > 0 ? static_cast<float>(u.shield / st.maxShield) : 0.0f;
    base_.at(r, layout_.cd()) =
        static_cast<float>(static_cast<double>(u.cd) / st.cooldownFrames);
    base_.at(r, layout_.curAct() + actIndex(u.curCmd)) = 1.0f;

    const Command* next = g.decidedFor(u.id);
    std::optional<Command> nextCmd;
    if (next != nullptr) nextCmd = *next;
    base_.at(r, layout_.nextAct() + actIndex(nextCmd)) = 1.0f;
    base_.at(r, layout_.actingType() + acting->type) = 1.0f;

    std::array<Vec2, 3> src = {u.pos, targetOf(u.curCmd, u.pos),
                               targetOf(nextCmd, u.pos)};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 2; ++b) {
        base_.at(r, layout_.distance(a, b)) =
            static_cast<float>(distance(src[a], refs[b]) / kDistanceScale);
      }
    }
    sources_.push_back(src);
  }
}

void GreedyFeatures::completeInto(const Command& candidate, float* out) const {
  std::memcpy(out, base_.data.data(), base_.data.size() * sizeof(float));
  Vec2 target = candidate.targetPos;
  for (int r = 0; r < base_.rows; ++r) {
    float* row = out + static_cast<std::size_t>(r) * base_.cols;
    for (int a = 0; a < 3; ++a) {
      row[layout_.distance(a, 2)] =
          static_cast<float>(distance(sources_[r][a], target) / kDistanceScale);
    }
  }
}

FeatureMatrix GreedyFeatures::complete(const Command& candidate) const {
  FeatureMatrix m;
  m.rows = base_.rows;
  m.cols = base_.cols;
  m.data.resize(base_.data.size());
  m.rowUnits = base_.rowUnits;
  m.candidateActType =
      candidate.type == ActType::Attack ? ActType::Attack : ActType::Move;
  completeInto(candidate, m.data.data());
  return m;
}

FeatureMatrix featurize(const GreedyState& g, const Command& candidate) {
  return GreedyFeatures(g).complete(candidate);
}

} // namespace microrl
