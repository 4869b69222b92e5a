#include "microrl/optimizer.h"

namespace microrl {

OptimizerKind parseOptimizerKind(const std::string& name) {
  if (name == "adagrad") return OptimizerKind::Adagrad;
  if (name == "rmsprop") return OptimizerKind::RmsProp;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

const char* optimizerName(OptimizerKind kind) {
  return kind == OptimizerKind::Adagrad ? "adagrad" : "rmsprop";
}

Optimizer::Optimizer(OptimizerConfig config, const NetShape& shape)
    : config_(config), accum_(ParameterSet<float>::zeros(shape)) {}

void Optimizer::descend(ParameterSet<float>& params,
                        const ParameterSet<float>& grads) {
  apply(params, grads, 1.0f);
}

void Optimizer::ascend(ParameterSet<float>& params,
                       const ParameterSet<float>& grads) {
  apply(params, grads, -1.0f);
}

void Optimizer::apply(ParameterSet<float>& params,
                      const ParameterSet<float>& grads, float sign) {
  auto p = params.arrays();
  auto g = grads.arrays();
  auto a = accum_.arrays();
  if (p.size() != g.size() || p.size() != a.size()) {
    throw std::invalid_argument("optimizer: parameter layout mismatch");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::size_t n = static_cast<std::size_t>(p[k].rows) * p[k].cols;
    if (n != static_cast<std::size_t>(g[k].rows) * g[k].cols ||
        n != static_cast<std::size_t>(a[k].rows) * a[k].cols) {
      throw std::invalid_argument(std::string("optimizer: shape mismatch for ") +
                                  p[k].name);
    }
    scratch_.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch_[i] = sign * g[k].data[i];
    std::span<float> x(p[k].data, n);
    std::span<const float> grad(scratch_.data(), n);
    std::span<float> acc(a[k].data, n);
    if (config_.kind == OptimizerKind::Adagrad) {
      adagradUpdate(x, grad, acc, config_.lr);
    } else {
      rmspropUpdate(x, grad, acc, config_.lr, config_.momentum);
    }
  }
}

} // namespace microrl
