#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "microrl/checkpoint.h"
#include "microrl/engine.h"
#include "microrl/featurizer.h"
#include "microrl/greedy_mdp.h"
#include "microrl/optimizer.h"
#include "microrl/policy_net.h"
#include "microrl/rng.h"

namespace microrl {

// ---------------------------------------------------------------------------
// Episode traces

/// One decision window: the frame state it started from and the commands
/// picked, in decision order. Indices refer to legalCommands() order.
struct WindowTrace {
  FrameState state;
  JointCommand joint;
  std::vector<int> chosen;
  std::vector<int> greedy; // index of the highest-scoring command
};

struct EpisodeTrace {
  std::vector<WindowTrace> windows;
  RewardTrace rewards;
  Vec<float> direction; // ZO perturbation direction; empty otherwise
  Outcome outcome = Outcome::Ongoing;
  int frames = 0;

  double totalReward() const;
  bool won() const {
    return outcome == Outcome::AllyWin;
  }
  int decisions() const;
  // Greedy state of decision k of window w, rebuilt from the trace.
  GreedyState greedyState(int window, int k) const;
};

/// Picks a command index for the acting unit; may report the index of the
/// unperturbed greedy choice through `greedyIndex`.
using DecisionFn = std::function<int(const GreedyState& g,
                                     const std::vector<Command>& legal,
                                     int* greedyIndex)>;

/// Plays a battle to the end, deciding every unit's command through the
/// greedy decomposition. `orderRng` draws the unit order.
EpisodeTrace playEpisode(Battle& battle, const DecisionFn& decide,
                         Rng& orderRng);

/// Plays a battle with a scripted policy for the ally team.
EpisodeTrace playScripted(Battle& battle, CommandPolicy& policy,
                          CommandPolicy* delegate);

// ---------------------------------------------------------------------------
// Scoring

/// Embeds every candidate command of one greedy state in a single batch.
class CandidateScorer {
 public:
  // Ψ for every command in `legal`, one row each.
  const Mat<float>& embedAll(const ParameterSet<float>& params,
                             const GreedyState& g,
                             const std::vector<Command>& legal);
  // <w, Ψ> per candidate, for the last embedAll call.
  const Vec<float>& scores(const Vec<float>& w);

  const ForwardCache<float>& cache() const {
    return cache_;
  }
  CandidateBatch& batch() {
    return batch_;
  }

 private:
  CandidateBatch batch_;
  ForwardCache<float> cache_;
  Vec<float> scores_;
};

// First index of the maximum.
int argmax(const Vec<float>& v);

/// Deterministic test-mode policy: argmax_c <w, Ψ(g, c)>.
DecisionFn greedyDecision(const ParameterSet<float>& params,
                          CandidateScorer& scorer);

// ---------------------------------------------------------------------------
// Zero-order backpropagation

Vec<float> sampleUnitSphere(int dim, Rng& rng);

/// sign(w_i / psi_i) computed as sign(w_i) * sign(psi_i), with sign(0) = 0.
Vec<float> signRatio(const Vec<float>& w, const Vec<float>& psi);

/// Mean of (d / delta) f(x + delta u) u over `samples` directions drawn
/// uniformly on the sphere, each evaluated together with its mirror -u.
std::vector<double> zeroOrderGradientEstimate(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double delta, int samples, Rng& rng);

// ---------------------------------------------------------------------------
// Q-learning

enum class EpsilonScheme { InverseSqrt = 1, InverseLinear = 2 };

/// Scheme 1: eps0 / sqrt(1 + epsA * eps0 * t).
/// Scheme 2: max(0.01, eps0 / (epsA * t)), t clamped to >= 1.
/// Both are capped at 1.
double epsilonSchedule(long t, double eps0, double epsA, EpsilonScheme scheme);

/// Epsilon-greedy choice over `scores`; ties go to the first index.
int epsilonGreedy(const Vec<float>& scores, double epsilon, Rng& rng);

// ---------------------------------------------------------------------------
// REINFORCE

/// Samples from softmax(scores / tau). Returns (index, log-probability).
std::pair<int, double> gibbsSample(const Vec<float>& scores, double tau,
                                   Rng& rng);
std::vector<double> gibbsProbabilities(const Vec<float>& scores, double tau);

/// Adds weight * d/dθ log softmax(<w, Ψ_c> / tau)[chosen] to `grads` (all
/// arrays, w included). `input`/`segments`/`acts` describe the candidates.
template <typename Scalar>
void accumulateLogProbGradient(const ParameterSet<Scalar>& params,
                               const Mat<Scalar>& input,
                               const std::vector<Segment>& segments,
                               const Mat<Scalar>& acts, int chosen,
                               double weight, double tau,
                               ParameterSet<Scalar>& grads,
                               ForwardCache<Scalar>& cache);

// ---------------------------------------------------------------------------
// Learners

enum class LearnerKind { ZeroOrder, Dqn, Reinforce };

LearnerKind parseLearnerKind(const std::string& name); // zo | dqn | pg
const char* learnerName(LearnerKind kind);

struct LearnerConfig {
  LearnerKind kind = LearnerKind::ZeroOrder;
  double lr = 1e-2;
  double delta = 0.01;  // ZO perturbation radius
  double tau = 1.0;     // Gibbs temperature
  double eps0 = 1.0;
  double epsA = 1.0;
  EpsilonScheme epsScheme = EpsilonScheme::InverseSqrt;
  OptimizerKind optimizer = OptimizerKind::Adagrad;
  double momentum = 0.99;
  bool normalized = true; // use normalized cumulative rewards
  int targetLag = 100;    // DQN optimizations between target refreshes

  // Learner-specific defaults (Adagrad for ZO, RMSProp otherwise).
  static LearnerConfig defaults(LearnerKind kind);
};

class Learner {
 public:
  Learner(LearnerConfig config, const NetShape& shape, Rng& initRng);
  virtual ~Learner() = default;

  /// Plays one training episode with exploration. Reads parameters only, so
  /// several workers may roll out concurrently with their own scorers.
  virtual EpisodeTrace runEpisode(Battle& battle, Rng& rng,
                                  CandidateScorer& scorer) const = 0;
  EpisodeTrace runEpisode(Battle& battle, Rng& rng) {
    return runEpisode(battle, rng, scorer_);
  }
  /// One optimization step from the last episode.
  virtual void update(const EpisodeTrace& trace) = 0;
  /// Current exploration parameter (delta, epsilon or tau).
  virtual double exploration() const = 0;

  const ParameterSet<float>& params() const {
    return params_;
  }
  ParameterSet<float>& params() {
    return params_;
  }
  const LearnerConfig& config() const {
    return config_;
  }
  long optimizations() const {
    return optimizations_;
  }

  /// Parameters, optimizer accumulators and learner state.
  virtual Checkpoint checkpoint(const std::string& scenario) const;
  virtual void restore(const Checkpoint& ckpt);

 protected:
  LearnerConfig config_;
  ParameterSet<float> params_;
  Optimizer optimizer_;
  ParameterSet<float> grads_;
  CandidateScorer scorer_;
  long optimizations_ = 0;
};

class ZeroOrderLearner : public Learner {
 public:
  using Learner::Learner;

  using Learner::runEpisode;
  EpisodeTrace runEpisode(Battle& battle, Rng& rng,
                          CandidateScorer& scorer) const override;
  void update(const EpisodeTrace& trace) override;
  double exploration() const override {
    return config_.delta;
  }
};

class DqnLearner : public Learner {
 public:
  DqnLearner(LearnerConfig config, const NetShape& shape, Rng& initRng);

  using Learner::runEpisode;
  EpisodeTrace runEpisode(Battle& battle, Rng& rng,
                          CandidateScorer& scorer) const override;
  void update(const EpisodeTrace& trace) override;
  double exploration() const override;

  const ParameterSet<float>& target() const {
    return target_;
  }
  Checkpoint checkpoint(const std::string& scenario) const override;
  void restore(const Checkpoint& ckpt) override;

  // Regression targets for every decision of `trace`, in decision order.
  std::vector<double> targets(const EpisodeTrace& trace);

 private:
  ParameterSet<float> target_;
};

class ReinforceLearner : public Learner {
 public:
  using Learner::Learner;

  using Learner::runEpisode;
  EpisodeTrace runEpisode(Battle& battle, Rng& rng,
                          CandidateScorer& scorer) const override;
  void update(const EpisodeTrace& trace) override;
  double exploration() const override {
    return config_.tau;
  }
};

std::unique_ptr<Learner> makeLearner(const LearnerConfig& config,
                                     const NetShape& shape, Rng& initRng);

} // namespace microrl
