#include "caafp/federation.hpp"

#include <algorithm>
#include <bit>

#include "caafp/common.hpp"

namespace caafp::fed {

Method method_from_name(const std::string& name) {
  if (name == "caafp") return Method::caafp;
  if (name == "dense-clustered") return Method::dense_clustered;
  if (name == "oneshot-prune") return Method::oneshot_prune;
  if (name == "global-ft") return Method::global_ft;
  throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::caafp: return "caafp";
    case Method::dense_clustered: return "dense-clustered";
    case Method::oneshot_prune: return "oneshot-prune";
    case Method::global_ft: return "global-ft";
  }
  throw ConfigError("bad method value");
}

void ExperimentConfig::validate(std::size_t population) const {
  if (population == 0) throw ConfigError("config: empty client population");
  arch.validate();
  scenario.validate();
  weights.validate();
  if (warmup_rounds < 0 || stabilize_rounds < 0 || prune_rounds < 0 || finetune_epochs < 0)
    throw ConfigError("config: phase lengths must be non-negative");
  if (local_epochs < 0) throw ConfigError("config: local_epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be positive");
  if (lambda < 0.0) throw ConfigError("config: lambda must be non-negative");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("config: test_fraction must be in [0, 1)");
  if (clusters < 1) throw ConfigError("config: clusters must be >= 1");
  if (clustered() && static_cast<std::size_t>(effective_clusters()) > population)
    throw ConfigError("config: more clusters than clients");
  if (clients_per_round < 1 || static_cast<std::size_t>(clients_per_round) > population)
    throw ConfigError("config: clients_per_round must be in [1, population]");
  if (prunes()) {
    if (prune_rounds < 1) throw ConfigError("config: pruning methods need prune_rounds >= 1");
    prune::PruneSchedule s = schedule;
    s.total_rounds = prune_rounds;
    s.validate();
    if (method != Method::oneshot_prune && s.step_count() < 1)
      throw ConfigError("config: schedule never fires; lower frequency or add rounds");
  }
}

std::vector<double> weighted_average(std::span<const std::vector<double>> vectors,
                                     std::span<const double> weights) {
  if (vectors.empty() || vectors.size() != weights.size())
    throw ConfigError("weighted_average: need matching non-empty inputs");
  double total = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw ConfigError("weighted_average: weights must be positive");
    total += w;
  }
  std::vector<double> out(vectors.front().size(), 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != out.size()) throw ConfigError("weighted_average: ragged input");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[k] * vectors[k][j];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

void check_ascending(std::span<const int> selected, std::size_t population, const char* who) {
  if (selected.empty()) throw ConfigError(std::string(who) + ": no participants");
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i] < 0 || static_cast<std::size_t>(selected[i]) >= population)
      throw ConfigError(std::string(who) + ": participant out of range");
    if (i > 0 && selected[i] <= selected[i - 1])
      throw ConfigError(std::string(who) + ": participants must be ascending and unique");
  }
}

// Shared body of fedavg_round / cluster_round: local training from a common
// broadcast, then a data-size weighted average.
std::vector<double> train_and_average(const nn::Network& net, const nn::ParamSet& broadcast,
                                      const std::vector<data::ClientDataset>& clients,
                                      std::span<const int> selected,
                                      std::vector<nn::OptimizerState>& opt_states,
                                      const TrainRound& round, const nn::ParamSet* reference,
                                      const prune::Mask* mask,
                                      std::vector<std::uint64_t>* upload_nonzeros) {
  if (opt_states.size() != clients.size())
    throw ConfigError("round: one optimizer state per client expected");
  std::vector<std::vector<double>> locals;
  std::vector<double> weights;
  locals.reserve(selected.size());
  weights.reserve(selected.size());
  for (int pos : selected) {
    const data::ClientDataset& client = clients[static_cast<std::size_t>(pos)];
    nn::ParamSet local = broadcast;
    LocalTrainOptions opts;
    opts.epochs = round.epochs;
    opts.batch_size = round.batch_size;
    opts.adam.learning_rate = round.learning_rate;
    opts.lambda = round.lambda;
    opts.reference = reference;
    opts.mask = mask;
    opts.dropout = true;
    opts.seed = seed_mix({round.master_seed, seed_tag::train,
                          static_cast<std::uint64_t>(round.global_round),
                          static_cast<std::uint64_t>(client.client_id)});
    local_train(net, local, opt_states[static_cast<std::size_t>(pos)], client, opts);
    if (upload_nonzeros) upload_nonzeros->push_back(prune::count_nonzero(local.values));
    weights.push_back(static_cast<double>(client.train_count()));
    locals.push_back(std::move(local.values));
  }
  return weighted_average(locals, weights);
}

}  // namespace

nn::ParamSet fedavg_round(const nn::Network& net, const nn::ParamSet& broadcast,
                          const std::vector<data::ClientDataset>& clients,
                          std::span<const int> selected,
                          std::vector<nn::OptimizerState>& opt_states, const TrainRound& round,
                          const prune::Mask* mask, std::vector<std::uint64_t>* upload_nonzeros) {
  check_ascending(selected, clients.size(), "fedavg_round");
  if (round.lambda != 0.0) throw ConfigError("fedavg_round: plain objective only");
  nn::ParamSet out{broadcast.layout,
                   train_and_average(net, broadcast, clients, selected, opt_states, round,
                                     nullptr, mask, upload_nonzeros)};
  if (mask) prune::apply_mask(out, *mask);
  return out;
}

void cluster_round(const nn::Network& net, ClusterState& state,
                   const std::vector<data::ClientDataset>& clients,
                   std::vector<nn::OptimizerState>& opt_states, const TrainRound& round,
                   bool use_mask, std::vector<std::uint64_t>* upload_nonzeros) {
  check_ascending(state.members, clients.size(), "cluster_round");
  const prune::Mask* mask = use_mask ? &state.mask : nullptr;
  const nn::ParamSet* ref = round.lambda > 0.0 ? &state.reference : nullptr;
  state.params.values = train_and_average(net, state.params, clients, state.members, opt_states,
                                          round, ref, mask, upload_nonzeros);
  if (mask) prune::apply_mask(state.params, *mask);
}

prune::ClusterSignals scoring_probe(const nn::Network& net, const ClusterState& state,
                                    const std::vector<data::ClientDataset>& clients,
                                    const TrainRound& round) {
  check_ascending(state.members, clients.size(), "scoring_probe");
  prune::ClusterSignals signals;
  for (int pos : state.members) {
    const data::ClientDataset& client = clients[static_cast<std::size_t>(pos)];
    nn::ParamSet local = state.params;
    nn::OptimizerState st = nn::OptimizerState::fresh(local.values.size());
    LocalTrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = round.batch_size;
    opts.adam.learning_rate = round.learning_rate;
    opts.lambda = round.lambda;
    opts.reference = round.lambda > 0.0 ? &state.reference : nullptr;
    opts.mask = &state.mask;
    opts.dropout = false;  // scores must not depend on dropout noise
    opts.seed = seed_mix({round.master_seed, seed_tag::score_probe,
                          static_cast<std::uint64_t>(round.global_round),
                          static_cast<std::uint64_t>(client.client_id)});
    nn::GradientSet accum(local.values.size(), 0.0);
    local_train(net, local, st, client, opts, &accum);
    signals.member_params.push_back(std::move(local.values));
    signals.member_grads.push_back(std::move(accum));
  }
  return signals;
}

std::uint64_t dataset_fingerprint(const std::vector<data::ClientDataset>& clients) {
  std::uint64_t h = seed_mix({clients.size()});
  for (const auto& c : clients) {
    h = seed_mix({h, static_cast<std::uint64_t>(c.client_id), c.train_count(), c.test_count(),
                  static_cast<std::uint64_t>(c.timesteps), static_cast<std::uint64_t>(c.channels),
                  static_cast<std::uint64_t>(c.num_classes)});
    std::uint64_t labels = 0;
    for (int y : c.train_y) labels = labels * 31 + static_cast<std::uint64_t>(y);
    std::uint64_t bits = 0;
    if (!c.train_x.empty()) bits = std::bit_cast<std::uint64_t>(c.train_x.front());
    h = seed_mix({h, labels, bits});
  }
  return h;
}

RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::vector<data::ClientDataset>& clients) {
  ExperimentDriver driver(cfg, &clients);
  driver.run_to_completion();
  return driver.result();
}

RunResult run_caafp(const ExperimentConfig& cfg, const std::vector<data::ClientDataset>& clients) {
  if (cfg.method != Method::caafp && cfg.method != Method::global_ft)
    throw ConfigError("run_caafp: config selects a baseline method");
  return run_experiment(cfg, clients);
}

RunResult run_baseline(const ExperimentConfig& cfg,
                       const std::vector<data::ClientDataset>& clients) {
  if (cfg.method == Method::caafp || cfg.method == Method::global_ft)
    throw ConfigError("run_baseline: config selects the adaptive method");
  return run_experiment(cfg, clients);
}

}  // namespace caafp::fed
