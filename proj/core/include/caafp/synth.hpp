#pragma once

#include <cstdint>

#include "caafp/dataset.hpp"

namespace caafp::data {

// Synthetic federated population with known cluster structure. Every latent
// cluster owns a distinct class-conditional signal template: class y in
// cluster c is a sinusoid whose frequency, phase and per-channel offset all
// depend on (c, y). Clients inherit their cluster's generator; Gaussian noise
// is added per sample.
//
// With label_shift enabled the class->frequency assignment is rotated per
// cluster, so the same waveform carries different labels in different
// clusters. That models concept shift: a single global model faces
// conflicting gradients that per-cluster models never see.
struct SynthSpec {
  int clusters = 3;
  int clients_per_cluster = 4;
  int samples_per_client = 48;
  int window = 32;
  int channels = 3;
  int classes = 4;
  double noise = 0.05;
  double cluster_phase = 0.9;   // phase offset per cluster, radians
  double cluster_offset = 0.4;  // per-channel DC offset step per cluster
  bool label_shift = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthPopulation {
  std::vector<ClientDataset> clients;  // all samples in the train part
  std::vector<int> true_cluster;      // aligned with clients
};

SynthPopulation synth_population(const SynthSpec& spec);

}  // namespace caafp::data
