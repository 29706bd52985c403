#include "caafp/synth.hpp"

#include <cmath>

namespace caafp::data {

void SynthSpec::validate() const {
  if (clusters < 1 || clients_per_cluster < 1 || samples_per_client < 1)
    throw ConfigError("synth: population sizes must be positive");
  if (window < 1 || channels < 1 || classes < 2)
    throw ConfigError("synth: window/channels/classes out of range");
  if (noise < 0.0) throw ConfigError("synth: negative noise");
}

SynthPopulation synth_population(const SynthSpec& spec) {
  spec.validate();
  constexpr double kTau = 6.283185307179586;

  SynthPopulation pop;
  int client_id = 0;
  for (int c = 0; c < spec.clusters; ++c) {
    for (int j = 0; j < spec.clients_per_cluster; ++j, ++client_id) {
      ClientDataset ds;
      ds.client_id = client_id;
      ds.timesteps = spec.window;
      ds.channels = spec.channels;
      ds.num_classes = spec.classes;

      Rng rng = make_rng(seed_mix({spec.seed, seed_tag::synth,
                                   static_cast<std::uint64_t>(client_id)}));
      for (int s = 0; s < spec.samples_per_client; ++s) {
        const int y = s % spec.classes;
        const int wave = spec.label_shift ? (y + c) % spec.classes : y;
        const double freq = 1.0 + wave + 0.15 * c;
        for (int t = 0; t < spec.window; ++t) {
          for (int ch = 0; ch < spec.channels; ++ch) {
            const double phase = spec.cluster_phase * c + kTau * ch / (2.0 * spec.channels);
            const double offset = spec.cluster_offset * c - 0.2 * ch;
            double v = std::sin(kTau * freq * t / spec.window + phase) + offset;
            if (spec.noise > 0.0) v += spec.noise * gaussian(rng);
            ds.train_x.push_back(v);
          }
        }
        ds.train_y.push_back(y);
      }
      ds.validate();
      pop.clients.push_back(std::move(ds));
      pop.true_cluster.push_back(c);
    }
  }
  return pop;
}

}  // namespace caafp::data
