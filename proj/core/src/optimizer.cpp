#include "caafp/optimizer.hpp"

#include <cmath>

namespace caafp::nn {

void adam_step(ParamSet& params, const GradientSet& grads, OptimizerState& state,
               const AdamConfig& cfg, const prune::Mask* mask) {
  const std::size_t n = params.values.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    throw ConfigError("adam_step: size mismatch between params, grads and state");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.values[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }

  if (mask) {
    const auto& idx = params.layout->prunable_indices();
    if (mask->size() != idx.size())
      throw ConfigError("adam_step: mask size does not match prunable count");
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!mask->active(i)) {
        params.values[idx[i]] = 0.0;
        state.m[idx[i]] = 0.0;
        state.v[idx[i]] = 0.0;
      }
    }
  }
}

}  // namespace caafp::nn
