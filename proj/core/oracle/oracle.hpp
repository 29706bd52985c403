#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "caafp/clustering.hpp"
#include "caafp/network.hpp"
#include "caafp/pruning.hpp"

// Independent reference implementations used to cross-check the library.
// Everything here favours the most literal formulation over speed, so a match
// means the optimized path got the math right, not that both share a bug.
namespace caafp::oracle {

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t params_checked = 0;
};

// Central finite differences of the full training objective (cross-entropy
// plus optional proximal term, dropout fixed by the seed in opts) against the
// analytic gradient. Relative error uses max(|analytic|, |numeric|, 1e-6) as
// the denominator.
GradCheck gradient_check(const nn::Network& net, const nn::ParamSet& params,
                         const nn::Batch& batch, std::span<const int> labels,
                         const nn::ParamSet* reference, double lambda,
                         const nn::ForwardOptions& opts, double h = 1e-5);

// Average linkage where every candidate pair distance is recomputed from the
// raw matrix by direct enumeration of member pairs.
cluster::ClusterAssignment linkage_bruteforce(const std::vector<double>& dist, int n, int k);

// One-position-at-a-time score formulas with textbook (sum of squares minus
// squared mean) variance.
std::vector<double> magnitude_scalar(const nn::ParamSet& params);
std::vector<double> coherence_scalar(const prune::ClusterSignals& s, const nn::Layout& layout);
std::vector<double> consistency_scalar(const prune::ClusterSignals& s, const nn::Layout& layout);
std::vector<double> regrow_scalar(const prune::ClusterSignals& s, const nn::Layout& layout);
std::vector<double> importance_scalar(const nn::ParamSet& params, const prune::ClusterSignals& s,
                                      const prune::ScoreWeights& w);

// Runs every oracle on small randomized cases, printing one line per check.
// Returns 0 when everything agrees.
int run_all(std::ostream& os);

}  // namespace caafp::oracle
