#pragma once

#include <cstdint>
#include <span>

#include "caafp/dataset.hpp"
#include "caafp/network.hpp"
#include "caafp/optimizer.hpp"

namespace caafp::fed {

struct LocalTrainOptions {
  int epochs = 1;
  int batch_size = 32;
  nn::AdamConfig adam;
  double lambda = 0.0;                      // proximal pull toward `reference`
  const nn::ParamSet* reference = nullptr;  // required when lambda > 0
  const prune::Mask* mask = nullptr;        // frozen sparsity pattern, if any
  bool dropout = true;
  std::uint64_t seed = 0;                   // base of the shuffle/dropout streams
};

// Runs epochs of minibatch Adam on the client's train split, mutating params
// and state in place. Batches are reshuffled each epoch from a seed-derived
// stream; the final partial batch is kept. When grad_accum is non-null the
// raw batch-mean gradients (before any masking) are summed into it.
void local_train(const nn::Network& net, nn::ParamSet& params, nn::OptimizerState& state,
                 const data::ClientDataset& client, const LocalTrainOptions& opts,
                 nn::GradientSet* grad_accum = nullptr);

nn::Batch train_batch(const data::ClientDataset& ds);
nn::Batch test_batch(const data::ClientDataset& ds);

// Accuracy of `params` on the client's test split. Empty test split is a
// data error.
double evaluate_client(const nn::Network& net, const nn::ParamSet& params,
                       const data::ClientDataset& ds);

}  // namespace caafp::fed
