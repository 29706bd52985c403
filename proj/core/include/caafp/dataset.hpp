#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caafp/common.hpp"

namespace caafp::data {

// One client's local data: fixed-shape windows [timesteps][channels] with
// integer labels, already divided into train and test parts. Loaders put
// everything into the train part; split_client produces the real division.
struct ClientDataset {
  int client_id = 0;
  int timesteps = 0;
  int channels = 0;
  int num_classes = 0;
  std::vector<double> train_x;
  std::vector<int> train_y;
  std::vector<double> test_x;
  std::vector<int> test_y;

  std::size_t train_count() const { return train_y.size(); }
  std::size_t test_count() const { return test_y.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(timesteps) * channels; }

  const double* train_sample(std::size_t i) const { return train_x.data() + i * sample_size(); }
  const double* test_sample(std::size_t i) const { return test_x.data() + i * sample_size(); }

  void validate() const;  // shape consistency, labels in range, non-empty train
};

enum class ScenarioKind { standard, noisy_clients, drift, non_iid_k };

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::standard;
  double client_fraction = 0.4;   // share of clients affected (noisy/drift)
  double label_noise_rate = 0.3;  // share of train labels resampled (noisy)
  int classes_per_client = 1;     // k for non_iid_k
  std::uint64_t seed = 0;

  void validate() const;
};

ScenarioKind scenario_kind_from_name(const std::string& name);
std::string scenario_name(ScenarioKind kind);

// Stratified split: per class, round(fraction * count) samples go to test,
// but never all of them, so train keeps at least one sample per class.
// Deterministic under the seed.
ClientDataset split_client(const ClientDataset& ds, double test_fraction, std::uint64_t seed);

// Label corruption touches train labels only; non_iid_k discards whole
// samples (train and test) outside the per-client sampled class set.
// Feature values are never modified.
std::vector<ClientDataset> apply_scenario(std::vector<ClientDataset> clients,
                                          const ScenarioSpec& spec);

// Per-channel z-score using train-split statistics, applied to both splits.
void standardize_client(ClientDataset& ds);

struct HeterogeneityReport {
  double mean_count = 0.0;
  double std_count = 0.0;
  double count_cv_pct = 0.0;           // 100 * std/mean of per-client sample counts
  int clients_missing_classes = 0;     // clients lacking at least one global class
  int client_total = 0;
  double mean_feature_cv_pct = 0.0;    // mean over channels of CV of per-client channel means
};

HeterogeneityReport heterogeneity_report(const std::vector<ClientDataset>& clients);

// Portable population container (version-tagged little-endian binary; layout
// described in the README). true_cluster may be empty.
void save_population(const std::vector<ClientDataset>& clients,
                     const std::vector<int>& true_cluster, const std::string& path);

struct LoadedPopulation {
  std::vector<ClientDataset> clients;
  std::vector<int> true_cluster;
};

LoadedPopulation load_population(const std::string& path);

}  // namespace caafp::data
