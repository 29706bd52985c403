#include "caafp/local_train.hpp"

#include <numeric>
#include <vector>

#include "caafp/common.hpp"

namespace caafp::fed {

namespace {

nn::Batch make_batch(const data::ClientDataset& ds, bool train, std::span<const int> rows) {
  nn::Batch b;
  b.count = rows.size();
  b.timesteps = ds.timesteps;
  b.channels = ds.channels;
  b.x.resize(b.count * ds.sample_size());
  const auto& src = train ? ds.train_x : ds.test_x;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* from = src.data() + static_cast<std::size_t>(rows[i]) * ds.sample_size();
    std::copy(from, from + ds.sample_size(), b.x.begin() + i * ds.sample_size());
  }
  return b;
}

nn::Batch full_batch(const data::ClientDataset& ds, bool train) {
  const std::size_t n = train ? ds.train_count() : ds.test_count();
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return make_batch(ds, train, rows);
}

}  // namespace

void local_train(const nn::Network& net, nn::ParamSet& params, nn::OptimizerState& state,
                 const data::ClientDataset& client, const LocalTrainOptions& opts,
                 nn::GradientSet* grad_accum) {
  if (opts.epochs < 0) throw ConfigError("local_train: negative epoch count");
  if (opts.batch_size <= 0) throw ConfigError("local_train: batch_size must be positive");
  if (client.train_count() == 0) throw DataError("local_train: client has no training data");
  if (grad_accum && grad_accum->size() != params.values.size())
    throw ConfigError("local_train: grad_accum size mismatch");

  const int n = static_cast<int>(client.train_count());
  std::vector<int> order(n);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed_mix({opts.seed, static_cast<std::uint64_t>(epoch)}));
    deterministic_shuffle(order, rng);
    int batch_index = 0;
    for (int start = 0; start < n; start += opts.batch_size, ++batch_index) {
      const int len = std::min(opts.batch_size, n - start);
      std::span<const int> rows(order.data() + start, static_cast<std::size_t>(len));
      nn::Batch batch = make_batch(client, true, rows);
      std::vector<int> labels(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) labels[static_cast<std::size_t>(i)] = client.train_y[rows[i]];

      nn::ForwardOptions fo;
      fo.training = opts.dropout;
      fo.dropout_seed = seed_mix({opts.seed, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(batch_index), 0x5eedULL});
      nn::LossResult res =
          net.loss_and_grad(params, batch, labels, opts.reference, opts.lambda, fo);
      if (grad_accum)
        for (std::size_t i = 0; i < res.grads.size(); ++i) (*grad_accum)[i] += res.grads[i];
      nn::adam_step(params, res.grads, state, opts.adam, opts.mask);
    }
  }
}

nn::Batch train_batch(const data::ClientDataset& ds) { return full_batch(ds, true); }
nn::Batch test_batch(const data::ClientDataset& ds) { return full_batch(ds, false); }

double evaluate_client(const nn::Network& net, const nn::ParamSet& params,
                       const data::ClientDataset& ds) {
  if (ds.test_count() == 0) throw DataError("evaluate_client: empty test split");
  return net.evaluate(params, test_batch(ds), ds.test_y);
}

}  // namespace caafp::fed
