#include "microrl/learners.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace microrl {

namespace {

// Rows per batched forward pass when replaying an episode.
constexpr int kReplayRowBudget = 4096;

struct DecisionRef {
  int window;
  int k;
};

std::vector<DecisionRef> decisionRefs(const EpisodeTrace& trace) {
  std::vector<DecisionRef> out;
  for (int w = 0; w < static_cast<int>(trace.windows.size()); ++w) {
    for (int k = 0; k < static_cast<int>(trace.windows[w].joint.size()); ++k) {
      out.push_back({w, k});
    }
  }
  return out;
}

// Embeds one command per decision, `pick(ref)` choosing which, in chunks of
// at most kReplayRowBudget rows. `visit(first, count, cache)` sees each
// chunk after its forward pass.
template <typename Pick, typename Visit>
void replayChunks(const EpisodeTrace& trace,
                  const std::vector<DecisionRef>& refs,
                  const ParameterSet<float>& params, Pick pick, Visit visit) {
  CandidateBatch batch;
  ForwardCache<float> cache;
  std::size_t i = 0;
  while (i < refs.size()) {
    std::size_t end = i;
    int rows = 0;
    while (end < refs.size()) {
      int r = trace.windows[refs[end].window].state.livingCount();
      if (end > i && rows + r > kReplayRowBudget) break;
      rows += r;
      ++end;
    }
    batch.reset(params.shape().inputWidth, rows, static_cast<int>(end - i));
    for (std::size_t j = i; j < end; ++j) {
      GreedyState g = trace.greedyState(refs[j].window, refs[j].k);
      batch.add(GreedyFeatures(g), pick(refs[j], g));
    }
    forwardBatch(params, batch.input(), batch.segments(), batch.acts(), cache);
    visit(i, end - i, cache);
    i = end;
  }
}

Command chosenCommand(const EpisodeTrace& trace, const DecisionRef& ref) {
  return trace.windows[ref.window].joint[ref.k].second;
}

Command greedyCommand(const EpisodeTrace& trace, const DecisionRef& ref,
                      const GreedyState& g) {
  const auto& wt = trace.windows[ref.window];
  auto legal = legalCommands(wt.state, g.actingUnit);
  return legal.at(wt.greedy[ref.k]);
}

std::vector<double> windowReturns(const RewardTrace& rewards, bool normalized) {
  return normalized ? normalizedReturns(rewards) : cumulativeReturns(rewards);
}

} // namespace

// ---------------------------------------------------------------------------

double EpisodeTrace::totalReward() const {
  double r = 0;
  for (const auto& w : rewards) r += w.reward;
  return r;
}

int EpisodeTrace::decisions() const {
  int n = 0;
  for (const auto& w : windows) n += static_cast<int>(w.joint.size());
  return n;
}

GreedyState EpisodeTrace::greedyState(int window, int k) const {
  const WindowTrace& wt = windows.at(window);
  if (k < 0 || k >= static_cast<int>(wt.joint.size())) {
    throw std::out_of_range("decision index out of range");
  }
  GreedyState g;
  g.base = &wt.state;
  g.decided.assign(wt.joint.begin(), wt.joint.begin() + k);
  g.actingUnit = wt.joint[k].first;
  for (UnitId id : wt.state.livingIds(Team::Ally)) {
    if (id != g.actingUnit && g.decidedFor(id) == nullptr) {
      g.remaining.push_back(id);
    }
  }
  return g;
}

EpisodeTrace playEpisode(Battle& battle, const DecisionFn& decide,
                         Rng& orderRng) {
  EpisodeTrace trace;
  while (!battle.done()) {
    const FrameState& s = battle.state();
    WindowTrace wt;
    wt.state = s;
    GreedyState g = beginRound(s, orderRng);
    for (;;) {
      auto legal = legalCommands(s, g.actingUnit);
      int greedy = -1;
      int idx = decide(g, legal, &greedy);
      if (idx < 0 || idx >= static_cast<int>(legal.size())) {
        throw GreedyMdpError("decision index out of range");
      }
      wt.chosen.push_back(idx);
      wt.greedy.push_back(greedy < 0 ? idx : greedy);
      auto next = advanceUnchecked(std::move(g), legal[idx], orderRng);
      if (auto* done = std::get_if<CompletedJointAction>(&next)) {
        wt.joint = std::move(done->joint);
        break;
      }
      g = std::get<GreedyState>(std::move(next));
    }
    double zBefore = scale(s);
    StepEvents events = battle.advance(wt.joint);
    trace.rewards.push_back(
        {reward(events), zBefore, scale(battle.state()), battle.done()});
    trace.windows.push_back(std::move(wt));
  }
  trace.outcome = battle.outcome();
  trace.frames = battle.state().frame;
  return trace;
}

EpisodeTrace playScripted(Battle& battle, CommandPolicy& policy,
                          CommandPolicy* delegate) {
  EpisodeTrace trace;
  while (!battle.done()) {
    double zBefore = scale(battle.state());
    JointCommand joint = policy.act(battle.state(), Team::Ally);
    StepEvents events = battle.advance(joint, delegate);
    trace.rewards.push_back(
        {reward(events), zBefore, scale(battle.state()), battle.done()});
  }
  trace.outcome = battle.outcome();
  trace.frames = battle.state().frame;
  return trace;
}

// ---------------------------------------------------------------------------

const Mat<float>& CandidateScorer::embedAll(const ParameterSet<float>& params,
                                            const GreedyState& g,
                                            const std::vector<Command>& legal) {
  GreedyFeatures features(g);
  batch_.reset(features.cols(), features.rows() * static_cast<int>(legal.size()),
               static_cast<int>(legal.size()));
  for (const auto& c : legal) batch_.add(features, c);
  forwardBatch(params, batch_.input(), batch_.segments(), batch_.acts(), cache_);
  return cache_.psi;
}

const Vec<float>& CandidateScorer::scores(const Vec<float>& w) {
  scores_.noalias() = cache_.psi * w;
  return scores_;
}

int argmax(const Vec<float>& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

DecisionFn greedyDecision(const ParameterSet<float>& params,
                          CandidateScorer& scorer) {
  return [&params, &scorer](const GreedyState& g,
                            const std::vector<Command>& legal, int* greedy) {
    scorer.embedAll(params, g, legal);
    int idx = argmax(scorer.scores(params.w));
    if (greedy != nullptr) *greedy = idx;
    return idx;
  };
}

// ---------------------------------------------------------------------------

Vec<float> sampleUnitSphere(int dim, Rng& rng) {
  if (dim <= 0) throw std::invalid_argument("sphere dimension must be positive");
  Eigen::VectorXd v(dim);
  double n = 0;
  while (n == 0) {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    n = v.norm();
  }
  return (v / n).cast<float>();
}

Vec<float> signRatio(const Vec<float>& w, const Vec<float>& psi) {
  if (w.size() != psi.size()) throw NetError("signRatio: dimension mismatch");
  Vec<float> out(w.size());
  for (int i = 0; i < w.size(); ++i) {
    float sw = static_cast<float>((w[i] > 0) - (w[i] < 0));
    float sp = static_cast<float>((psi[i] > 0) - (psi[i] < 0));
    out[i] = sw * sp;
  }
  return out;
}

std::vector<double> zeroOrderGradientEstimate(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double delta, int samples, Rng& rng) {
  if (samples <= 0 || !(delta > 0)) {
    throw std::invalid_argument("need positive samples and delta");
  }
  const int d = static_cast<int>(x.size());
  std::vector<double> acc(d, 0.0), plus(d), minus(d);
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd u(d);
    double n = 0;
    while (n == 0) {
      for (int i = 0; i < d; ++i) u[i] = rng.normal();
      n = u.norm();
    }
    u /= n;
    for (int i = 0; i < d; ++i) {
      plus[i] = x[i] + delta * u[i];
      minus[i] = x[i] - delta * u[i];
    }
    double diff = f(plus) - f(minus);
    for (int i = 0; i < d; ++i) acc[i] += diff * u[i];
  }
  // Each pair contributes two samples of (d/delta) f(x + delta u) u.
  double k = static_cast<double>(d) / delta / (2.0 * samples);
  for (auto& a : acc) a *= k;
  return acc;
}

// ---------------------------------------------------------------------------

double epsilonSchedule(long t, double eps0, double epsA, EpsilonScheme scheme) {
  if (t < 0) throw std::invalid_argument("epsilon schedule: t must be >= 0");
  double eps = 0;
  if (scheme == EpsilonScheme::InverseSqrt) {
    eps = eps0 / std::sqrt(1.0 + epsA * eps0 * static_cast<double>(t));
  } else {
    double tt = static_cast<double>(std::max<long>(t, 1));
    eps = std::max(0.01, eps0 / (epsA * tt));
  }
  return std::min(1.0, eps);
}

int epsilonGreedy(const Vec<float>& scores, double epsilon, Rng& rng) {
  if (scores.size() == 0) throw std::invalid_argument("no candidates");
  if (epsilon > 0 && rng.bernoulli(epsilon)) {
    return static_cast<int>(rng.index(static_cast<std::size_t>(scores.size())));
  }
  return argmax(scores);
}

std::vector<double> gibbsProbabilities(const Vec<float>& scores, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("temperature must be positive");
  if (scores.size() == 0) throw std::invalid_argument("no candidates");
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < scores.size(); ++i) m = std::max(m, scores[i] / tau);
  std::vector<double> p(scores.size());
  double sum = 0;
  for (int i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] / tau - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::pair<int, double> gibbsSample(const Vec<float>& scores, double tau,
                                   Rng& rng) {
  auto p = gibbsProbabilities(scores, tau);
  double u = rng.uniform();
  double acc = 0;
  int pick = static_cast<int>(p.size()) - 1;
  for (int i = 0; i < static_cast<int>(p.size()); ++i) {
    acc += p[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return {pick, std::log(p[pick])};
}

template <typename Scalar>
void accumulateLogProbGradient(const ParameterSet<Scalar>& params,
                               const Mat<Scalar>& input,
                               const std::vector<Segment>& segments,
                               const Mat<Scalar>& acts, int chosen,
                               double weight, double tau,
                               ParameterSet<Scalar>& grads,
                               ForwardCache<Scalar>& cache) {
  forwardBatch(params, input, segments, acts, cache);
  const int batch = cache.batch();
  if (chosen < 0 || chosen >= batch) {
    throw std::out_of_range("chosen candidate out of range");
  }
  Vec<Scalar> scores = cache.psi * params.w;
  double m = -std::numeric_limits<double>::infinity();
  for (int b = 0; b < batch; ++b) {
    m = std::max(m, static_cast<double>(scores[b]) / tau);
  }
  std::vector<double> p(batch);
  double sum = 0;
  for (int b = 0; b < batch; ++b) {
    p[b] = std::exp(static_cast<double>(scores[b]) / tau - m);
    sum += p[b];
  }
  // d log pi(chosen) / d score_b = (1[b = chosen] - pi_b) / tau
  Vec<Scalar> coef(batch);
  for (int b = 0; b < batch; ++b) {
    coef[b] = static_cast<Scalar>(
        weight * ((b == chosen ? 1.0 : 0.0) - p[b] / sum) / tau);
  }
  grads.w.noalias() += cache.psi.transpose() * coef;
  Mat<Scalar> gradPsi = coef * params.w.transpose();
  backwardBatch(cache, gradPsi, params, grads);
}

template void accumulateLogProbGradient<float>(
    const ParameterSet<float>&, const Mat<float>&, const std::vector<Segment>&,
    const Mat<float>&, int, double, double, ParameterSet<float>&,
    ForwardCache<float>&);
template void accumulateLogProbGradient<double>(
    const ParameterSet<double>&, const Mat<double>&,
    const std::vector<Segment>&, const Mat<double>&, int, double, double,
    ParameterSet<double>&, ForwardCache<double>&);

// ---------------------------------------------------------------------------

LearnerKind parseLearnerKind(const std::string& name) {
  if (name == "zo") return LearnerKind::ZeroOrder;
  if (name == "dqn") return LearnerKind::Dqn;
  if (name == "pg") return LearnerKind::Reinforce;
  throw std::invalid_argument("unknown learner '" + name +
                              "' (expected zo, dqn or pg)");
}

const char* learnerName(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::ZeroOrder:
      return "zo";
    case LearnerKind::Dqn:
      return "dqn";
    case LearnerKind::Reinforce:
      return "pg";
  }
  return "?";
}

LearnerConfig LearnerConfig::defaults(LearnerKind kind) {
  LearnerConfig c;
  c.kind = kind;
  if (kind == LearnerKind::ZeroOrder) {
    c.optimizer = OptimizerKind::Adagrad;
    c.lr = 1e-2;
  } else {
    c.optimizer = OptimizerKind::RmsProp;
    c.lr = 1e-4;
  }
  return c;
}

Learner::Learner(LearnerConfig config, const NetShape& shape, Rng& initRng)
    : config_(config),
      params_(ParameterSet<float>::initialize(shape, initRng)),
      optimizer_(OptimizerConfig{config.optimizer, config.lr, config.momentum},
                 shape),
      grads_(ParameterSet<float>::zeros(shape)) {
  if (!(config.lr > 0)) throw std::invalid_argument("lr must be positive");
  if (config.kind == LearnerKind::ZeroOrder && !(config.delta > 0)) {
    throw std::invalid_argument("delta must be positive");
  }
  if (config.kind == LearnerKind::Reinforce && !(config.tau > 0)) {
    throw std::invalid_argument("tau must be positive");
  }
  if (config.targetLag <= 0) {
    throw std::invalid_argument("target lag must be positive");
  }
}

Checkpoint Learner::checkpoint(const std::string& scenario) const {
  Checkpoint ckpt;
  ckpt.scenario = scenario;
  ckpt.featureWidth = static_cast<std::uint32_t>(params_.shape().inputWidth);
  ckpt.putParameters(params_);
  ckpt.putParameters(optimizer_.accumulators(), "optim.");
  auto n = static_cast<std::uint64_t>(optimizations_);
  ckpt.put({"meta.steps",
            {2},
            {static_cast<float>(n & 0xffffffu), static_cast<float>(n >> 24)}});
  return ckpt;
}

void Learner::restore(const Checkpoint& ckpt) {
  if (!(ckpt.netShape() == params_.shape())) {
    throw CheckpointError("checkpoint network shape does not match");
  }
  ckpt.getParameters(params_);
  if (ckpt.hasParameters("optim.")) {
    ckpt.getParameters(optimizer_.accumulators(), "optim.");
  }
  if (const NamedArray* steps = ckpt.find("meta.steps");
      steps != nullptr && steps->data.size() == 2) {
    optimizations_ = static_cast<long>(steps->data[0]) +
                     (static_cast<long>(steps->data[1]) << 24);
  }
}

// ---------------------------------------------------------------------------

EpisodeTrace ZeroOrderLearner::runEpisode(Battle& battle, Rng& rng,
                                          CandidateScorer& scorer) const {
  const int dim = static_cast<int>(params_.w.size());
  Vec<float> u = sampleUnitSphere(dim, rng);
  Vec<float> perturbed = params_.w + static_cast<float>(config_.delta) * u;
  auto decide = [&](const GreedyState& g, const std::vector<Command>& legal,
                    int* greedy) {
    scorer.embedAll(params_, g, legal);
    int idx = argmax(scorer.scores(perturbed));
    *greedy = idx;
    return idx;
  };
  EpisodeTrace trace = playEpisode(battle, decide, rng);
  trace.direction = std::move(u);
  return trace;
}

void ZeroOrderLearner::update(const EpisodeTrace& trace) {
  const int t = static_cast<int>(trace.windows.size());
  if (trace.direction.size() != params_.w.size()) {
    throw std::invalid_argument("episode has no perturbation direction");
  }
  grads_.setZero();
  // Windows k = t-1 .. 1 (1-based); window k's return sums the rewards of
  // windows k .. t-1, so the last window contributes nothing.
  std::vector<double> coef(t, 0.0);
  double R = 0;
  double gw = 0;
  for (int k = t - 1; k >= 1; --k) {
    const WindowRecord& rec = trace.rewards[k - 1];
    if (config_.normalized) {
      R = (rec.reward + rec.zAfter * R) / rec.zBefore;
    } else {
      R += rec.reward;
    }
    coef[k - 1] = R / t;
    gw += R / t;
  }
  grads_.w = static_cast<float>(gw) * trace.direction;

  std::vector<DecisionRef> refs;
  for (const auto& ref : decisionRefs(trace)) {
    if (coef[ref.window] != 0.0) refs.push_back(ref);
  }
  const Vec<float>& u = trace.direction;
  replayChunks(
      trace, refs, params_,
      [&](const DecisionRef& ref, const GreedyState&) {
        return chosenCommand(trace, ref);
      },
      [&](std::size_t first, std::size_t count, const ForwardCache<float>& c) {
        Mat<float> gradPsi(static_cast<Eigen::Index>(count), u.size());
        for (std::size_t j = 0; j < count; ++j) {
          Vec<float> psi = c.psi.row(static_cast<Eigen::Index>(j)).transpose();
          Vec<float> s = signRatio(params_.w, psi);
          float a = static_cast<float>(coef[refs[first + j].window]);
          gradPsi.row(static_cast<Eigen::Index>(j)) =
              (a * u.cwiseProduct(s)).transpose();
        }
        backwardBatch(c, gradPsi, params_, grads_);
      });

  optimizer_.ascend(params_, grads_);
  ++optimizations_;
}

// ---------------------------------------------------------------------------

DqnLearner::DqnLearner(LearnerConfig config, const NetShape& shape,
                       Rng& initRng)
    : Learner(config, shape, initRng), target_(params_) {}

double DqnLearner::exploration() const {
  return epsilonSchedule(optimizations_, config_.eps0, config_.epsA,
                         config_.epsScheme);
}

EpisodeTrace DqnLearner::runEpisode(Battle& battle, Rng& rng,
                                    CandidateScorer& scorer) const {
  const double eps = exploration();
  auto decide = [&](const GreedyState& g, const std::vector<Command>& legal,
                    int* greedy) {
    scorer.embedAll(params_, g, legal);
    const Vec<float>& q = scorer.scores(params_.w);
    *greedy = argmax(q);
    return epsilonGreedy(q, eps, rng);
  };
  return playEpisode(battle, decide, rng);
}

std::vector<double> DqnLearner::targets(const EpisodeTrace& trace) {
  auto refs = decisionRefs(trace);
  // Q_target(g_i, a*_i), a*_i the online greedy command recorded at g_i.
  std::vector<double> qNext(refs.size());
  replayChunks(
      trace, refs, target_,
      [&](const DecisionRef& ref, const GreedyState& g) {
        return greedyCommand(trace, ref, g);
      },
      [&](std::size_t first, std::size_t count, const ForwardCache<float>& c) {
        Vec<float> q = c.psi * target_.w;
        for (std::size_t j = 0; j < count; ++j) {
          qNext[first + j] = q[static_cast<Eigen::Index>(j)];
        }
      });

  std::vector<double> y(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const DecisionRef& ref = refs[i];
    bool lastInWindow =
        ref.k + 1 == static_cast<int>(trace.windows[ref.window].joint.size());
    if (!lastInWindow) {
      y[i] = qNext[i + 1];
      continue;
    }
    const WindowRecord& rec = trace.rewards[ref.window];
    bool hasNext = i + 1 < refs.size();
    double future = hasNext ? qNext[i + 1] : 0.0;
    if (config_.normalized) {
      y[i] = (rec.reward + (hasNext ? rec.zAfter * future : 0.0)) / rec.zBefore;
    } else {
      y[i] = rec.reward + future;
    }
  }
  return y;
}

void DqnLearner::update(const EpisodeTrace& trace) {
  auto refs = decisionRefs(trace);
  if (!refs.empty()) {
    std::vector<double> y = targets(trace);
    const double n = static_cast<double>(refs.size());
    grads_.setZero();
    replayChunks(
        trace, refs, params_,
        [&](const DecisionRef& ref, const GreedyState&) {
          return chosenCommand(trace, ref);
        },
        [&](std::size_t first, std::size_t count, const ForwardCache<float>& c) {
          Vec<float> q = c.psi * params_.w;
          Vec<float> err(static_cast<Eigen::Index>(count));
          for (std::size_t j = 0; j < count; ++j) {
            err[static_cast<Eigen::Index>(j)] = static_cast<float>(
                (q[static_cast<Eigen::Index>(j)] - y[first + j]) / n);
          }
          grads_.w.noalias() += c.psi.transpose() * err;
          Mat<float> gradPsi = err * params_.w.transpose();
          backwardBatch(c, gradPsi, params_, grads_);
        });
    optimizer_.descend(params_, grads_);
  }
  ++optimizations_;
  if (optimizations_ % config_.targetLag == 0) target_ = params_;
}

Checkpoint DqnLearner::checkpoint(const std::string& scenario) const {
  Checkpoint ckpt = Learner::checkpoint(scenario);
  ckpt.putParameters(target_, "target.");
  return ckpt;
}

void DqnLearner::restore(const Checkpoint& ckpt) {
  Learner::restore(ckpt);
  if (ckpt.hasParameters("target.")) {
    ckpt.getParameters(target_, "target.");
  } else {
    target_ = params_;
  }
}

// ---------------------------------------------------------------------------

EpisodeTrace ReinforceLearner::runEpisode(Battle& battle, Rng& rng,
                                          CandidateScorer& scorer) const {
  auto decide = [&](const GreedyState& g, const std::vector<Command>& legal,
                    int* greedy) {
    scorer.embedAll(params_, g, legal);
    const Vec<float>& s = scorer.scores(params_.w);
    *greedy = argmax(s);
    return gibbsSample(s, config_.tau, rng).first;
  };
  return playEpisode(battle, decide, rng);
}

void ReinforceLearner::update(const EpisodeTrace& trace) {
  const int n = trace.decisions();
  if (n > 0) {
    std::vector<double> G = windowReturns(trace.rewards, config_.normalized);
    grads_.setZero();
    CandidateBatch& batch = scorer_.batch();
    ForwardCache<float> cache;
    for (int w = 0; w < static_cast<int>(trace.windows.size()); ++w) {
      const WindowTrace& wt = trace.windows[w];
      if (G[w] == 0.0) continue;
      for (int k = 0; k < static_cast<int>(wt.joint.size()); ++k) {
        GreedyState g = trace.greedyState(w, k);
        auto legal = legalCommands(wt.state, g.actingUnit);
        GreedyFeatures features(g);
        batch.reset(features.cols(),
                    features.rows() * static_cast<int>(legal.size()),
                    static_cast<int>(legal.size()));
        for (const auto& c : legal) batch.add(features, c);
        accumulateLogProbGradient(params_, batch.input(), batch.segments(),
                                  batch.acts(), wt.chosen[k], G[w] / n,
                                  config_.tau, grads_, cache);
      }
    }
    optimizer_.ascend(params_, grads_);
  }
  ++optimizations_;
}

std::unique_ptr<Learner> makeLearner(const LearnerConfig& config,
                                     const NetShape& shape, Rng& initRng) {
  switch (config.kind) {
    case LearnerKind::ZeroOrder:
      return std::make_unique<ZeroOrderLearner>(config, shape, initRng);
    case LearnerKind::Dqn:
      return std::make_unique<DqnLearner>(config, shape, initRng);
    case LearnerKind::Reinforce:
      return std::make_unique<ReinforceLearner>(config, shape, initRng);
  }
  throw std::invalid_argument("unknown learner kind");
}

} // namespace microrl
