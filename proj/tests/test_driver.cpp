#include <algorithm>
#include <cmath>
#include <vector>

#include "caafp/federation.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace caafp;
using caafp::test::make_client;
using caafp::test::tiny_arch;

namespace {

std::vector<data::ClientDataset> population(int n, int train_n = 9, int test_n = 6) {
  std::vector<data::ClientDataset> out;
  for (int i = 0; i < n; ++i) out.push_back(make_client(i, tiny_arch(), train_n, test_n, 500 + i));
  return out;
}

fed::ExperimentConfig small_caafp() {
  fed::ExperimentConfig cfg;
  cfg.method = fed::Method::caafp;
  cfg.warmup_rounds = 2;
  cfg.stabilize_rounds = 1;
  cfg.prune_rounds = 8;
  cfg.finetune_epochs = 1;
  cfg.local_epochs = 1;
  cfg.batch_size = 4;
  cfg.clusters = 2;
  cfg.clients_per_round = 4;
  cfg.schedule.start_sparsity = 0.3;
  cfg.schedule.target_sparsity = 0.6;
  cfg.schedule.frequency = 2;
  cfg.schedule.churn_rate = 0.1;
  cfg.seed = 7;
  return cfg;
}

void check_same_result(const fed::RunResult& a, const fed::RunResult& b) {
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].round == b.rounds[i].round);
    CHECK(a.rounds[i].phase == b.rounds[i].phase);
    CHECK(a.rounds[i].client_accuracy == b.rounds[i].client_accuracy);
    CHECK(a.rounds[i].mu == b.rounds[i].mu);
    CHECK(a.rounds[i].sigma == b.rounds[i].sigma);
    CHECK(a.rounds[i].round_mb == b.rounds[i].round_mb);
    CHECK(a.rounds[i].cumulative_mb == b.rounds[i].cumulative_mb);
    CHECK(a.rounds[i].mean_sparsity == b.rounds[i].mean_sparsity);
  }
  CHECK(a.final_metrics.mu == b.final_metrics.mu);
  CHECK(a.final_metrics.sigma == b.final_metrics.sigma);
  CHECK(a.final_metrics.mean_sparsity == b.final_metrics.mean_sparsity);
  CHECK(a.total_comm_mb == b.total_comm_mb);
  REQUIRE(a.client_models.size() == b.client_models.size());
  for (std::size_t i = 0; i < a.client_models.size(); ++i)
    CHECK(a.client_models[i].values == b.client_models[i].values);
  REQUIRE(a.prune_events.size() == b.prune_events.size());
  for (std::size_t i = 0; i < a.prune_events.size(); ++i) {
    CHECK(a.prune_events[i].first == b.prune_events[i].first);
    CHECK(a.prune_events[i].second.round == b.prune_events[i].second.round);
    CHECK(a.prune_events[i].second.pruned == b.prune_events[i].second.pruned);
    CHECK(a.prune_events[i].second.grown == b.prune_events[i].second.grown);
  }
  REQUIRE(a.traffic.size() == b.traffic.size());
  for (std::size_t i = 0; i < a.traffic.size(); ++i)
    CHECK(a.traffic[i].nonzero_count == b.traffic[i].nonzero_count);
}

std::size_t prunable_zeros(const nn::ParamSet& model) {
  std::size_t zeros = 0;
  for (std::size_t i : model.layout->prunable_indices()) zeros += model.values[i] == 0.0;
  return zeros;
}

}  // namespace

TEST_CASE("two runs from the same seed are identical") {
  const auto clients = population(6);
  const auto cfg = small_caafp();
  const auto a = fed::run_experiment(cfg, clients);
  const auto b = fed::run_experiment(cfg, clients);
  check_same_result(a, b);
  CHECK(a.rounds.size() == 11);  // eval_every = 1
}

TEST_CASE("a restored checkpoint continues to the same result") {
  const auto clients = population(6);
  const auto cfg = small_caafp();
  test::TempDir dir("ckpt");

  fed::ExperimentDriver full(cfg, &clients);
  fed::ExperimentDriver half(cfg, &clients);
  for (int i = 0; i < 6; ++i) REQUIRE(half.step());  // mid prune phase
  half.save_checkpoint(dir.file("mid.bin"));
  full.run_to_completion();
  half.run_to_completion();
  check_same_result(full.result(), half.result());

  auto restored = fed::ExperimentDriver::restore_checkpoint(dir.file("mid.bin"), &clients);
  restored->run_to_completion();
  check_same_result(full.result(), restored->result());
}

TEST_CASE("a checkpoint refuses to restore against different data") {
  const auto clients = population(6);
  const auto cfg = small_caafp();
  test::TempDir dir("ckpt_guard");
  fed::ExperimentDriver d(cfg, &clients);
  REQUIRE(d.step());
  d.save_checkpoint(dir.file("r1.bin"));

  auto tampered = clients;
  tampered[0].train_y[0] = (tampered[0].train_y[0] + 1) % 3;
  CHECK_THROWS_AS(fed::ExperimentDriver::restore_checkpoint(dir.file("r1.bin"), &tampered),
                  DataError);
  CHECK_THROWS_AS(d.result(), ConfigError);  // run not finished yet
}

TEST_CASE("the adaptive run lands on the target sparsity") {
  const auto clients = population(6);
  const auto cfg = small_caafp();
  const auto res = fed::run_experiment(cfg, clients);

  const auto n =
      static_cast<double>(res.client_models[0].layout->prunable_indices().size());
  CHECK(std::abs(res.final_metrics.mean_sparsity - 0.6) <= 1.0 / n);
  // Last mask event of each cluster is the exact landing.
  double last_after[2] = {-1.0, -1.0};
  for (const auto& [cid, rep] : res.prune_events) last_after[cid] = rep.sparsity_after;
  for (double s : last_after) {
    REQUIRE(s >= 0.0);
    CHECK(std::abs(s - 0.6) <= 1.0 / n);
  }
  // Sparsity never decreases across a cluster's events (heal never outpaces prune).
  double prev[2] = {0.0, 0.0};
  for (const auto& [cid, rep] : res.prune_events) {
    CHECK(rep.sparsity_after >= prev[cid] - 1e-12);
    prev[cid] = rep.sparsity_after;
  }
}

TEST_CASE("every final client model honors its mask") {
  const auto clients = population(6);
  auto cfg = small_caafp();
  cfg.finetune_epochs = 0;
  const auto res = fed::run_experiment(cfg, clients);
  const auto& layout = *res.client_models[0].layout;
  const auto target_zeros =
      static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(
                                                      layout.prunable_indices().size())));
  for (const auto& model : res.client_models) CHECK(prunable_zeros(model) >= target_zeros);

  // With no fine-tuning, members of one cluster share the cluster model verbatim.
  for (std::size_t i = 0; i < clients.size(); ++i)
    for (std::size_t j = i + 1; j < clients.size(); ++j)
      if (res.assignment.cluster_of[i] == res.assignment.cluster_of[j])
        CHECK(res.client_models[i].values == res.client_models[j].values);
}

TEST_CASE("the dense baseline never prunes") {
  const auto clients = population(6);
  auto cfg = small_caafp();
  cfg.method = fed::Method::dense_clustered;
  const auto res = fed::run_experiment(cfg, clients);
  CHECK(res.prune_events.empty());
  CHECK(res.final_metrics.mean_sparsity == 0.0);
  for (const auto& rm : res.rounds) CHECK(rm.mean_sparsity == 0.0);
}

TEST_CASE("the one-shot baseline prunes once and keeps the mask") {
  const auto clients = population(6);
  auto cfg = small_caafp();
  cfg.method = fed::Method::oneshot_prune;
  cfg.warmup_rounds = 1;
  cfg.stabilize_rounds = 1;
  cfg.prune_rounds = 6;
  const auto res = fed::run_experiment(cfg, clients);

  REQUIRE(res.prune_events.size() == 1);
  const auto& [cid, rep] = res.prune_events[0];
  CHECK(cid == 0);
  CHECK(rep.round == 1);  // first round of the pruning phase
  const auto& layout = *res.client_models[0].layout;
  const auto n = layout.prunable_indices().size();
  const auto zeros = static_cast<std::uint64_t>(std::llround(0.6 * static_cast<double>(n)));
  CHECK(rep.pruned == zeros);

  // Broadcast payload is full-size while dense and constant once masked.
  const std::uint64_t total = layout.total_size();
  for (const auto& t : res.traffic) {
    if (t.direction != metrics::Direction::down) continue;
    if (t.round <= 2)
      CHECK(t.nonzero_count == total);
    else
      CHECK(t.nonzero_count == total - zeros);
  }
  CHECK(res.distance_matrix.empty());
  CHECK(res.assignment.members.size() == 1);
}

TEST_CASE("single-cluster adaptive run equals the global fine-tuning ablation") {
  const auto clients = population(6);
  auto one = small_caafp();
  one.clusters = 1;
  auto ablation = one;
  ablation.method = fed::Method::global_ft;
  ablation.clusters = 3;  // ignored: this method always folds into one cluster

  const auto a = fed::run_experiment(one, clients);
  const auto b = fed::run_experiment(ablation, clients);
  check_same_result(a, b);
  CHECK(b.assignment.members.size() == 1);
}

TEST_CASE("fine-tuning happens without any communication") {
  const auto clients = population(6);
  auto cfg = small_caafp();
  cfg.finetune_epochs = 3;
  const auto res = fed::run_experiment(cfg, clients);
  CHECK(res.final_metrics.round_mb == 0.0);
  REQUIRE(!res.rounds.empty());
  CHECK(res.final_metrics.cumulative_mb == res.rounds.back().cumulative_mb);
  CHECK(res.total_comm_mb == res.final_metrics.cumulative_mb);
  for (const auto& t : res.traffic) CHECK(t.round <= cfg.total_rounds());
  // The local epochs still did something.
  auto frozen = cfg;
  frozen.finetune_epochs = 0;
  const auto base = fed::run_experiment(frozen, clients);
  bool moved = false;
  for (std::size_t i = 0; i < clients.size(); ++i)
    if (res.client_models[i].values != base.client_models[i].values) moved = true;
  CHECK(moved);
}

TEST_CASE("evaluation cadence still records the last round") {
  const auto clients = population(6);
  auto cfg = small_caafp();
  cfg.eval_every = 4;  // 11 total rounds: evals at 4, 8, and the forced final 11
  const auto res = fed::run_experiment(cfg, clients);
  REQUIRE(res.rounds.size() == 3);
  CHECK(res.rounds[0].round == 4);
  CHECK(res.rounds[1].round == 8);
  CHECK(res.rounds[2].round == 11);
}
