#pragma once

#include <cstdint>
#include <vector>

#include "caafp/arch.hpp"
#include "caafp/mask.hpp"

namespace caafp::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static OptimizerState fresh(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
  }
  void reset() {
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    step = 0;
  }
};

// One Adam update with bias correction. When a mask is given, masked prunable
// positions end the step at exactly zero and their moments are zeroed, so a
// masked model stays masked no matter how many steps run.
void adam_step(ParamSet& params, const GradientSet& grads, OptimizerState& state,
               const AdamConfig& cfg, const prune::Mask* mask = nullptr);

}  // namespace caafp::nn
