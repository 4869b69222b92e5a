#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "microrl/policy_net.h"

namespace microrl {

constexpr double kOptimizerEpsilon = 1e-8;

// Descent steps on a flat array. Both keep a per-coordinate accumulator of
// squared gradients and step by lr * g / (sqrt(accum) + eps).
template <typename Scalar>
void adagradUpdate(std::span<Scalar> x, std::span<const Scalar> g,
                   std::span<Scalar> accum, double lr) {
  if (x.size() != g.size() || x.size() != accum.size()) {
    throw std::invalid_argument("adagrad: shape mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    accum[i] += g[i] * g[i];
    x[i] -= static_cast<Scalar>(lr * g[i] /
                                (std::sqrt(static_cast<double>(accum[i])) +
                                 kOptimizerEpsilon));
  }
}

template <typename Scalar>
void rmspropUpdate(std::span<Scalar> x, std::span<const Scalar> g,
                   std::span<Scalar> accum, double lr, double rho) {
  if (x.size() != g.size() || x.size() != accum.size()) {
    throw std::invalid_argument("rmsprop: shape mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    accum[i] = static_cast<Scalar>(rho * accum[i] + (1.0 - rho) * g[i] * g[i]);
    x[i] -= static_cast<Scalar>(lr * g[i] /
                                (std::sqrt(static_cast<double>(accum[i])) +
                                 kOptimizerEpsilon));
  }
}

enum class OptimizerKind { Adagrad, RmsProp };

OptimizerKind parseOptimizerKind(const std::string& name);
const char* optimizerName(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adagrad;
  double lr = 1e-3;
  double momentum = 0.99; // RMSProp decay
};

/// Adagrad or RMSProp over a whole ParameterSet, with one accumulator per
/// parameter array.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const NetShape& shape);

  void descend(ParameterSet<float>& params, const ParameterSet<float>& grads);
  void ascend(ParameterSet<float>& params, const ParameterSet<float>& grads);

  const OptimizerConfig& config() const {
    return config_;
  }
  ParameterSet<float>& accumulators() {
    return accum_;
  }
  const ParameterSet<float>& accumulators() const {
    return accum_;
  }

 private:
  void apply(ParameterSet<float>& params, const ParameterSet<float>& grads,
             float sign);

  OptimizerConfig config_;
  ParameterSet<float> accum_;
  std::vector<float> scratch_;
};

} // namespace microrl
