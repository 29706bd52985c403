#include <benchmark/benchmark.h>

#include <vector>

#include "caafp/clustering.hpp"
#include "caafp/local_train.hpp"
#include "caafp/network.hpp"
#include "caafp/optimizer.hpp"
#include "caafp/pruning.hpp"

using namespace caafp;

namespace {

// Production geometry; batch size follows the benchmark argument.
nn::ArchitectureSpec bench_arch() {
  nn::ArchitectureSpec a;
  a.timesteps = 128;
  a.channels = 9;
  a.num_classes = 6;
  return a;
}

nn::Batch random_batch(const nn::ArchitectureSpec& a, int count, Rng& rng) {
  nn::Batch b;
  b.count = count;
  b.timesteps = a.timesteps;
  b.channels = a.channels;
  b.x.reserve(static_cast<std::size_t>(count) * a.timesteps * a.channels);
  for (int i = 0; i < count * a.timesteps * a.channels; ++i)
    b.x.push_back(uniform_double(rng, -1.0, 1.0));
  return b;
}

std::vector<int> random_labels(int count, int classes, Rng& rng) {
  std::vector<int> y(static_cast<std::size_t>(count));
  for (int& v : y) v = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  return y;
}

void bm_forward(benchmark::State& state) {
  const auto a = bench_arch();
  nn::Network net(a);
  const auto params = net.init_params(1);
  Rng rng = make_rng(2);
  const auto batch = random_batch(a, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    auto probs = net.forward(params, batch);
    benchmark::DoNotOptimize(probs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_loss_and_grad(benchmark::State& state) {
  const auto a = bench_arch();
  nn::Network net(a);
  const auto params = net.init_params(1);
  Rng rng = make_rng(3);
  const auto batch = random_batch(a, static_cast<int>(state.range(0)), rng);
  const auto labels = random_labels(batch.count, a.num_classes, rng);
  for (auto _ : state) {
    auto res = net.loss_and_grad(params, batch, labels, nullptr, 0.0);
    benchmark::DoNotOptimize(res.grads.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_adam_step(benchmark::State& state) {
  const auto a = bench_arch();
  nn::Network net(a);
  nn::ParamSet params = net.init_params(1);
  const nn::GradientSet grads(params.values.size(), 0.01);
  auto st = nn::OptimizerState::fresh(params.values.size());
  nn::AdamConfig adam;
  for (auto _ : state) {
    nn::adam_step(params, grads, st, adam);
    benchmark::DoNotOptimize(params.values.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(params.values.size()));
}

void bm_prune_heal_step(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng = make_rng(4);
  std::vector<double> scores(n), grow(n);
  for (auto& v : scores) v = unit_double(rng);
  for (auto& v : grow) v = unit_double(rng);
  prune::PruneSchedule sched;
  sched.start_sparsity = 0.4;
  sched.target_sparsity = 0.4;
  sched.frequency = 1;
  sched.churn_rate = 0.05;
  sched.total_rounds = 1000000;  // keep every iteration a constant-sparsity step
  prune::Mask base = prune::one_shot_prune(scores, 0.4);
  for (auto _ : state) {
    prune::Mask mask = base;
    auto rep = prune::prune_heal_step(mask, scores, grow, sched, 1);
    benchmark::DoNotOptimize(rep.pruned);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void bm_cosine_distance_matrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng = make_rng(5);
  std::vector<cluster::UpdateDelta> deltas;
  for (int i = 0; i < n; ++i) {
    std::vector<double> d(83110);
    for (auto& v : d) v = uniform_double(rng, -1.0, 1.0);
    deltas.push_back({i, std::move(d)});
  }
  for (auto _ : state) {
    auto dist = cluster::cosine_distance_matrix(deltas);
    benchmark::DoNotOptimize(dist.data());
  }
}

BENCHMARK(bm_forward)->Arg(1)->Arg(32);
BENCHMARK(bm_loss_and_grad)->Arg(1)->Arg(32);
BENCHMARK(bm_adam_step);
BENCHMARK(bm_prune_heal_step)->Arg(82944);
BENCHMARK(bm_cosine_distance_matrix)->Arg(12)->Arg(30);

}  // namespace

BENCHMARK_MAIN();
