#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "microrl/featurizer.h"
#include "microrl/scenario.h"
#include "test_util.h"

using namespace microrl;
using testutil::StateBuilder;

namespace {

GreedyState roundFor(const FrameState& s, UnitId acting) {
  GreedyState g;
  g.base = &s;
  g.actingUnit = acting;
  for (UnitId id : s.livingIds(Team::Ally)) {
    if (id != acting) g.remaining.push_back(id);
  }
  return g;
}

int rowOf(const FeatureMatrix& m, UnitId id) {
  auto it = std::find(m.rowUnits.begin(), m.rowUnits.end(), id);
  REQUIRE(it != m.rowUnits.end());
  return static_cast<int>(it - m.rowUnits.begin());
}

std::vector<std::vector<float>> sortedRows(const FeatureMatrix& m) {
  std::vector<std::vector<float>> rows;
  for (int r = 0; r < m.rows; ++r) {
    rows.emplace_back(m.data.begin() + r * m.cols, m.data.begin() + (r + 1) * m.cols);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

Vec2 rigid(Vec2 p, double angle, Vec2 shift) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y};
}

} // namespace

TEST_SUITE("featurizer") {

TEST_CASE("feature width") {
  CHECK(featureWidth(1) == 21);
  CHECK(featureWidth(2) == 23);
  CHECK(featureWidth(*loadScenario("m5v5").rules) == 21);
  CHECK(featureWidth(*loadScenario("w15v17").rules) == 21);
  CHECK(featureWidth(*loadScenario("dragoons_zealots").rules) == 23);
}

TEST_CASE("distances are divided by the map scale") {
  FrameState s = StateBuilder(testutil::builtinRules("m5v5"))
                     .ally("marine", {0, 0})
                     .ally("marine", {3, 4})
                     .enemy("marine", {0, 10})
                     .build();
  GreedyState g = roundFor(s, 0);
  FeatureLayout L{1};
  FeatureMatrix m = featurize(g, Command::attack(2, {0, 10}));
  REQUIRE(m.rows == 3);
  REQUIRE(m.cols == 21);
  int self = rowOf(m, 0), other = rowOf(m, 1), enemy = rowOf(m, 2);
  CHECK(m.at(self, L.distance(0, 0)) == 0.0f);
  CHECK(m.at(other, L.distance(0, 0)) == doctest::Approx(5.0 / 32.0));
  CHECK(m.at(enemy, L.distance(0, 2)) == 0.0f);
  CHECK(m.at(self, L.distance(0, 2)) == doctest::Approx(10.0 / 32.0));
  // no current command: target is the unit's own position
  CHECK(m.at(other, L.distance(1, 0)) == doctest::Approx(5.0 / 32.0));
  CHECK(m.candidateActType == ActType::Attack);
  CHECK(m.candidateOneHot()[0] == 1.0f);
}

TEST_CASE("shared target gives zero distance") {
  FrameState s = StateBuilder(testutil::builtinRules("m5v5"))
                     .ally("marine", {0, 0})
                     .ally("marine", {3, 0})
                     .enemy("marine", {1, 12})
                     .build();
  s.units[1].curCmd = Command::attack(2, {1, 12});
  GreedyState g = roundFor(s, 0);
  FeatureLayout L{1};
  FeatureMatrix m = featurize(g, Command::attack(2, {1, 12}));
  CHECK(m.at(rowOf(m, 1), L.distance(1, 2)) == 0.0f);

  // a decided next command for unit 1 with the same target
  GreedyState g2 = roundFor(s, 0);
  g2.decided.emplace_back(1, Command::attack(2, {1, 12}));
  g2.remaining.clear();
  FeatureMatrix m2 = featurize(g2, Command::attack(2, {1, 12}));
  int r = rowOf(m2, 1);
  CHECK(m2.at(r, L.distance(2, 2)) == 0.0f);
  CHECK(m2.at(r, L.nextAct() + static_cast<int>(ActType::Attack)) == 1.0f);
}

TEST_CASE("one-hot blocks and ranges on battle states") {
  for (const char* name : {"m5v5", "dragoons_zealots", "w5v5"}) {
    ScenarioSpec spec = loadScenario(name);
    Rng rng(3);
    FrameState s = spawn(spec, rng);
    s.units[1].curCmd = Command::hold(s.units[1].pos);
    s.units[6].curCmd = Command::attack(0, s.units[0].pos);
    s.units[2].hp *= 0.5;
    s.units[2].cd = 3;
    FeatureLayout L{static_cast<int>(spec.rules->types.size())};
    GreedyState g = roundFor(s, 0);
    g.decided.emplace_back(3, Command::attack(5, s.units[5].pos));
    g.remaining.erase(std::find(g.remaining.begin(), g.remaining.end(), 3));
    FeatureMatrix m = featurize(g, Command::move(Direction::N, s.units[0].pos, 3));
    CHECK(m.cols == L.width());
    for (int r = 0; r < m.rows; ++r) {
      float enemy = m.at(r, L.enemy());
      CHECK((enemy == 0.0f || enemy == 1.0f));
      auto blockSum = [&](int start, int len) {
        float sum = 0;
        for (int c = start; c < start + len; ++c) {
          CHECK((m.at(r, c) == 0.0f || m.at(r, c) == 1.0f));
          sum += m.at(r, c);
        }
        return sum;
      };
      CHECK(blockSum(L.type(), L.numTypes) == 1.0f);
      CHECK(blockSum(L.curAct(), kNumActTypes) == 1.0f);
      CHECK(blockSum(L.nextAct(), kNumActTypes) == 1.0f);
      CHECK(blockSum(L.actingType(), L.numTypes) == 1.0f);
      for (int c : {L.hp(), L.shield(), L.cd()}) {
        CHECK(m.at(r, c) >= 0.0f);
        CHECK(m.at(r, c) <= 1.0f);
      }
      for (int c = L.distances(); c < L.width(); ++c) CHECK(m.at(r, c) >= 0.0f);
    }
    CHECK(m.at(rowOf(m, 1), L.curAct() + static_cast<int>(ActType::Move)) == 1.0f);
    CHECK(m.at(rowOf(m, 6), L.curAct() + static_cast<int>(ActType::Attack)) == 1.0f);
    CHECK(m.at(rowOf(m, 0), L.curAct() + static_cast<int>(ActType::NoCommand)) ==
          1.0f);
    CHECK(m.at(rowOf(m, 2), L.hp()) == doctest::Approx(0.5));
    CHECK(m.at(rowOf(m, 3), L.nextAct() + static_cast<int>(ActType::Attack)) ==
          1.0f);
    CHECK(m.candidateActType == ActType::Move);
  }
}

TEST_CASE("rows are invariant to relabelling unit ids") {
  ScenarioSpec spec = loadScenario("m5v5");
  Rng rng(9);
  FrameState s = spawn(spec, rng);
  s.units[2].curCmd = Command::attack(7, s.units[7].pos);
  // reverse ally ids and enemy ids within their ranges
  FrameState p = s;
  auto relabel = [](UnitId id) { return id < 5 ? 4 - id : 14 - id; };
  for (auto& u : p.units) {
    u.id = relabel(u.id);
    if (u.curCmd && u.curCmd->target != kNoUnit) {
      u.curCmd->target = relabel(u.curCmd->target);
    }
  }
  std::sort(p.units.begin(), p.units.end(),
            [](const UnitState& a, const UnitState& b) { return a.id < b.id; });
  Command cand = Command::attack(6, s.find(6)->pos);
  Command candP = Command::attack(relabel(6), s.find(6)->pos);
  FeatureMatrix a = featurize(roundFor(s, 1), cand);
  FeatureMatrix b = featurize(roundFor(p, relabel(1)), candP);
  CHECK(sortedRows(a) == sortedRows(b));
}

TEST_CASE("rows are invariant to rigid motions of the map") {
  ScenarioSpec spec = loadScenario("dragoons_zealots");
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    FrameState s = spawn(spec, rng);
    s.units[0].curCmd = Command::attack(7, s.units[7].pos);
    s.units[8].curCmd = Command::move(Direction::SW, s.units[8].pos, 3);
    double angle = rng.uniform(0, 6.283);
    Vec2 shift{rng.uniform(-20, 20), rng.uniform(-20, 20)};
    FrameState t = s;
    for (auto& u : t.units) {
      u.pos = rigid(u.pos, angle, shift);
      if (u.curCmd) u.curCmd->targetPos = rigid(u.curCmd->targetPos, angle, shift);
    }
    Vec2 dest = s.units[2].pos + Vec2{2, 1};
    Command cand = Command::hold(dest);
    Command candT = Command::hold(rigid(dest, angle, shift));
    FeatureMatrix a = featurize(roundFor(s, 2), cand);
    FeatureMatrix b = featurize(roundFor(t, 2), candT);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("complete matches featurize and dead acting unit is rejected") {
  ScenarioSpec spec = loadScenario("m5v5");
  Rng rng(2);
  FrameState s = spawn(spec, rng);
  GreedyState g = roundFor(s, 0);
  GreedyFeatures gf(g);
  for (const Command& c : legalCommands(s, 0)) {
    FeatureMatrix a = gf.complete(c);
    FeatureMatrix b = featurize(g, c);
    CHECK(a.data == b.data);
  }
  s.units[0].hp = 0;
  CHECK_THROWS_AS(GreedyFeatures{g}, GreedyMdpError);
}

} // TEST_SUITE
