#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "caafp/dataset.hpp"
#include "caafp/network.hpp"

namespace caafp::cluster {

// One local training epoch's parameter movement away from a shared reference.
struct UpdateDelta {
  int client_id = 0;
  std::vector<double> delta;
};

struct ClusterAssignment {
  std::vector<int> cluster_of;            // client position -> cluster id in [0, K)
  std::vector<std::vector<int>> members;  // cluster id -> client positions, ascending

  int num_clusters() const { return static_cast<int>(members.size()); }
  void validate() const;
};

struct ProbeConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// One plain cross-entropy epoch of Adam from the reference params, dropout
// off so the delta is a pure function of data and seed. The reference is not
// modified.
UpdateDelta compute_delta(const nn::Network& net, const nn::ParamSet& reference,
                          const data::ClientDataset& client, const ProbeConfig& probe);

// Pairwise d = 1 - cos(delta_i, delta_j), row-major n*n. Zero-norm deltas sit
// at distance 1 from everything; the diagonal is 0.
std::vector<double> cosine_distance_matrix(const std::vector<UpdateDelta>& deltas);

// Bottom-up average linkage on a precomputed distance matrix, stopping at k
// clusters. Merge ties resolve to the lowest (i, j) active-position pair, so
// the procedure is fully deterministic. Cluster ids are assigned by each
// final cluster's smallest member position.
ClusterAssignment agglomerative_cluster(const std::vector<double>& dist, int n, int k);

// Fraction of client pairs on whose grouping two assignments agree.
double rand_index(std::span<const int> a, std::span<const int> b);

void write_distance_csv(const std::vector<double>& dist, int n, const std::string& path);
void write_assignment_csv(const ClusterAssignment& a, std::span<const int> client_ids,
                          const std::string& path);

}  // namespace caafp::cluster
