#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "caafp/arch.hpp"

namespace caafp::nn {

// A batch of windows, row-major [count][timesteps][channels].
struct Batch {
  int count = 0;
  int timesteps = 0;
  int channels = 0;
  std::vector<double> x;

  double at(int i, int t, int c) const {
    return x[(static_cast<std::size_t>(i) * timesteps + t) * channels + c];
  }
};

struct ForwardOptions {
  bool training = false;          // enables inverted dropout
  std::uint64_t dropout_seed = 0; // same seed -> same dropout pattern
};

struct LossResult {
  double loss = 0.0;
  GradientSet grads;
};

class Network {
 public:
  explicit Network(const ArchitectureSpec& spec);

  const ArchitectureSpec& spec() const { return layout_->spec(); }
  const LayoutPtr& layout() const { return layout_; }

  // He-uniform kernels (limit sqrt(6/fan_in)), zero biases.
  ParamSet init_params(std::uint64_t seed) const;

  // Class probabilities, row-major [count][num_classes]; rows sum to 1.
  std::vector<double> forward(const ParamSet& params, const Batch& batch,
                              const ForwardOptions& opts = {}) const;

  // Mean cross-entropy over the batch plus, when lambda > 0, a proximal
  // penalty (lambda/2)*||w - reference||^2 over every parameter. Gradients are
  // reported for all positions, including currently masked ones; masking is
  // the optimizer's job.
  LossResult loss_and_grad(const ParamSet& params, const Batch& batch,
                           std::span<const int> labels, const ParamSet* reference,
                           double lambda, const ForwardOptions& opts = {}) const;

  // Argmax accuracy with dropout off. Ties resolve to the lowest class index.
  double evaluate(const ParamSet& params, const Batch& batch,
                  std::span<const int> labels) const;

 private:
  struct Trace;  // per-batch activations kept for the backward pass
  void run_forward(const ParamSet& params, const Batch& batch, const ForwardOptions& opts,
                   Trace& trace) const;
  void check_batch(const ParamSet& params, const Batch& batch) const;

  LayoutPtr layout_;
};

}  // namespace caafp::nn
