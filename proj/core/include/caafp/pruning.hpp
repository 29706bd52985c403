#pragma once

#include <span>
#include <vector>

#include "caafp/arch.hpp"
#include "caafp/mask.hpp"

namespace caafp::prune {

// Mixing weights for the three importance terms. Must sum to 1.
struct ScoreWeights {
  double alpha = 0.25;  // magnitude
  double beta = 0.25;   // coherence
  double gamma = 0.50;  // consistency

  void validate() const;
};

struct PruneSchedule {
  double start_sparsity = 0.7;
  double target_sparsity = 0.7;
  int frequency = 5;        // mask updates every `frequency` rounds
  double churn_rate = 0.05; // fraction of active weights recycled per update
  int total_rounds = 50;    // length of the pruned-training phase

  void validate() const;
  bool is_step_round(int round) const { return round >= 1 && round % frequency == 0; }
  int first_step_round() const { return frequency; }
  int step_count() const { return total_rounds / frequency; }
};

// Signals gathered from one scoring probe: each member's post-epoch parameter
// vector and its accumulated (summed over batches) gradient, both full-length.
struct ClusterSignals {
  std::vector<std::vector<double>> member_params;
  std::vector<std::vector<double>> member_grads;

  void validate(std::size_t dim) const;
};

// All score vectors are aligned with Layout::prunable_indices().

// |w| / max|w| over prunable positions; all zeros when the max is zero.
std::vector<double> magnitude_score(const nn::ParamSet& params);

// 1 / (1 + Var_k(w_j)) with population variance across members. A singleton
// cluster scores 1 everywhere.
std::vector<double> coherence_score(const ClusterSignals& signals, const nn::Layout& layout);

// |mean_k sign(g_j)| with sign(0) = 0.
std::vector<double> consistency_score(const ClusterSignals& signals, const nn::Layout& layout);

// alpha*magnitude + beta*coherence + gamma*consistency.
std::vector<double> importance(const nn::ParamSet& params, const ClusterSignals& signals,
                               const ScoreWeights& weights);

// |mean_k g_j| at prunable positions; ranks candidates for regrowth.
std::vector<double> regrow_signal(const ClusterSignals& signals, const nn::Layout& layout);

// Deactivates the round(sparsity * N) lowest-score positions of a fresh
// all-active mask. Ties break toward the lower index.
Mask one_shot_prune(std::span<const double> scores, double sparsity);

struct StepReport {
  int round = 0;
  double sparsity_before = 0.0;
  double sparsity_after = 0.0;
  std::size_t churn = 0;    // N_churn actually applied
  std::size_t deficit = 0;  // net positions pruned beyond churn
  std::size_t pruned = 0;
  std::size_t grown = 0;
  bool degenerate = false;  // pruning was clipped to keep one active weight
};

// One mask-evolution step at `round` (1-based within the pruned phase):
//   remaining steps R = floor((T3 - round) / f), at least 1 on the last step;
//   sparsity increment dS = (S_target - S) / R;
//   N_deficit = round(dS * N), clamped so the target is never overshot and
//   hit exactly on the final step;
//   N_churn = floor(churn_rate * N_active), clamped to the pool of weights
//   that were already inactive (regrowth never resurrects what this very
//   step pruned).
// Prunes the N_churn + N_deficit lowest-score active positions, regrows the
// N_churn previously-inactive positions with the largest grow_signal. All
// ties break toward the lower index.
StepReport prune_heal_step(Mask& mask, std::span<const double> scores,
                           std::span<const double> grow_signal, const PruneSchedule& schedule,
                           int round);

// Zeroes masked prunable positions in place; everything else is untouched.
void apply_mask(nn::ParamSet& params, const Mask& mask);

std::uint64_t count_nonzero(std::span<const double> values);

}  // namespace caafp::prune
