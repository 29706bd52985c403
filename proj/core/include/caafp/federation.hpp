#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "caafp/clustering.hpp"
#include "caafp/dataset.hpp"
#include "caafp/local_train.hpp"
#include "caafp/metrics.hpp"
#include "caafp/network.hpp"
#include "caafp/optimizer.hpp"
#include "caafp/pruning.hpp"
#include "caafp/synth.hpp"

namespace caafp::fed {

enum class Method { caafp, dense_clustered, oneshot_prune, global_ft };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

// Full experiment description. Training phases follow the four-stage
// pipeline: warmup (global averaging), update-direction clustering, dense
// per-cluster stabilization, pruned per-cluster training, then local
// fine-tuning under the frozen mask.
struct ExperimentConfig {
  Method method = Method::caafp;

  std::string dataset = "synth";  // synth | wisdm | ucihar
  std::string dataset_path;
  data::ScenarioSpec scenario{};
  data::SynthSpec synth{};
  double test_fraction = 0.2;
  bool standardize = false;

  nn::ArchitectureSpec arch{};  // timesteps/channels/classes come from the data

  int warmup_rounds = 0;
  int stabilize_rounds = 0;
  int prune_rounds = 50;
  int finetune_epochs = 3;

  int local_epochs = 3;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double lambda = 0.1;  // proximal pull toward the per-client reference

  int clusters = 3;
  int clients_per_round = 10;  // sampled in global rounds; cluster rounds take all members

  prune::ScoreWeights weights{};
  prune::PruneSchedule schedule{};  // total_rounds is kept equal to prune_rounds

  int eval_every = 1;
  bool include_mask_bytes = false;  // add a 1-bit-per-weight bitmap to mask-change broadcasts
  std::uint64_t seed = 1;

  bool prunes() const { return method != Method::dense_clustered; }
  bool clustered() const { return method != Method::oneshot_prune; }
  int effective_clusters() const { return method == Method::global_ft ? 1 : clusters; }
  int total_rounds() const { return warmup_rounds + stabilize_rounds + prune_rounds; }

  void validate(std::size_t population) const;
};

struct TrainRound {
  int global_round = 1;
  std::uint64_t master_seed = 0;
  int epochs = 1;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double lambda = 0.0;
};

// Data-size weighted average in ascending position order; the reduction order
// is fixed so client list permutations cannot change the result.
std::vector<double> weighted_average(std::span<const std::vector<double>> vectors,
                                     std::span<const double> weights);

// One synchronous round: broadcast -> local training -> weighted average.
// `selected` holds ascending client positions; opt_states persist across
// rounds of the same phase. With a mask, client training and the aggregate
// both stay inside the active set. upload_nonzeros (when given) receives the
// nonzero count each selected client sends back.
nn::ParamSet fedavg_round(const nn::Network& net, const nn::ParamSet& broadcast,
                          const std::vector<data::ClientDataset>& clients,
                          std::span<const int> selected,
                          std::vector<nn::OptimizerState>& opt_states, const TrainRound& round,
                          const prune::Mask* mask = nullptr,
                          std::vector<std::uint64_t>* upload_nonzeros = nullptr);

struct ClusterState {
  int cluster_id = 0;
  nn::ParamSet params;      // w_c, always satisfies w_c = w_c masked
  prune::Mask mask;         // over prunable positions
  nn::ParamSet reference;   // frozen warm-up output the proximal term pulls toward
  std::vector<int> members; // ascending client positions
};

// Cluster round: every member trains the regularized objective from the
// cluster model; the aggregate replaces state.params (re-masked when
// use_mask).
void cluster_round(const nn::Network& net, ClusterState& state,
                   const std::vector<data::ClientDataset>& clients,
                   std::vector<nn::OptimizerState>& opt_states, const TrainRound& round,
                   bool use_mask, std::vector<std::uint64_t>* upload_nonzeros = nullptr);

// Scoring probe for mask updates: each member runs one masked epoch of the
// phase objective (dropout off) and reports its post-epoch parameters and
// accumulated gradient. The cluster model itself is left untouched.
prune::ClusterSignals scoring_probe(const nn::Network& net, const ClusterState& state,
                                    const std::vector<data::ClientDataset>& clients,
                                    const TrainRound& round);

struct RunResult {
  cluster::ClusterAssignment assignment;
  std::vector<double> distance_matrix;  // empty unless the method clusters
  std::vector<metrics::RoundMetrics> rounds;
  metrics::RoundMetrics final_metrics;
  std::vector<metrics::Transmission> traffic;
  std::vector<std::pair<int, prune::StepReport>> prune_events;  // (cluster id, step)
  std::vector<nn::ParamSet> client_models;                      // final per-client models
  double total_comm_mb = 0.0;
};

enum class Stage { warmup, clustering, stabilize, prune, finetune, done };

// Drives one experiment round by round so state can be checkpointed at any
// boundary. Client data is referenced, not owned, and is not part of the
// checkpoint; a fingerprint guards against restoring with different data.
class ExperimentDriver {
 public:
  ExperimentDriver(const ExperimentConfig& cfg, const std::vector<data::ClientDataset>* clients);

  bool step();  // false once the run is complete
  void run_to_completion();

  Stage stage() const { return stage_; }
  int global_round() const { return global_round_; }
  const ExperimentConfig& config() const { return cfg_; }
  const nn::Network& network() const { return *net_; }
  const RunResult& result() const;

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<ExperimentDriver> restore_checkpoint(
      const std::string& path, const std::vector<data::ClientDataset>* clients);

 private:
  explicit ExperimentDriver(const std::vector<data::ClientDataset>* clients);

  void enter_stage(Stage s);
  void do_warmup_round();
  void do_clustering();
  void do_cluster_round(bool pruned_phase);
  void do_oneshot_round();
  void do_finetune();
  void maybe_mask_update();
  void record_round(const std::string& phase, double round_mb);
  void evaluate_population(std::vector<double>& out) const;
  const nn::ParamSet& model_for_client(int position) const;
  double mean_sparsity() const;
  std::vector<int> sample_clients() const;
  void log_traffic(std::span<const int> participants, const prune::Mask* mask,
                   std::span<const std::uint64_t> uploads, bool mask_changed, double& mb);

  ExperimentConfig cfg_;
  const std::vector<data::ClientDataset>* clients_ = nullptr;
  std::unique_ptr<nn::Network> net_;

  Stage stage_ = Stage::warmup;
  int round_in_stage_ = 0;  // completed rounds within the current stage
  int global_round_ = 0;    // completed rounds overall
  bool oneshot_mask_applied_ = false;

  nn::ParamSet global_params_;
  prune::Mask global_mask_;  // oneshot path only
  std::vector<ClusterState> clusters_;
  std::vector<nn::OptimizerState> opt_states_;
  RunResult result_;
  double cumulative_mb_ = 0.0;
};

// Convenience wrappers over the driver.
RunResult run_caafp(const ExperimentConfig& cfg, const std::vector<data::ClientDataset>& clients);
RunResult run_baseline(const ExperimentConfig& cfg,
                       const std::vector<data::ClientDataset>& clients);
RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::vector<data::ClientDataset>& clients);

std::uint64_t dataset_fingerprint(const std::vector<data::ClientDataset>& clients);

}  // namespace caafp::fed
