#include "caafp/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace caafp::prune {

void ScoreWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
    throw ConfigError("score weights must be non-negative");
  if (std::abs(alpha + beta + gamma - 1.0) > 1e-9)
    throw ConfigError("score weights must sum to 1");
}

void PruneSchedule::validate() const {
  if (start_sparsity < 0.0 || target_sparsity < start_sparsity || target_sparsity >= 1.0)
    throw ConfigError("schedule: need 0 <= start <= target < 1");
  if (frequency < 1) throw ConfigError("schedule: frequency must be >= 1");
  if (churn_rate < 0.0 || churn_rate >= 1.0) throw ConfigError("schedule: churn must be in [0,1)");
  if (total_rounds < 0) throw ConfigError("schedule: negative round count");
}

void ClusterSignals::validate(std::size_t dim) const {
  if (member_params.empty() || member_params.size() != member_grads.size())
    throw ConfigError("cluster signals: need matching params and grads per member");
  for (const auto& v : member_params)
    if (v.size() != dim) throw ConfigError("cluster signals: param vector size mismatch");
  for (const auto& v : member_grads)
    if (v.size() != dim) throw ConfigError("cluster signals: grad vector size mismatch");
}

std::vector<double> magnitude_score(const nn::ParamSet& params) {
  const auto& idx = params.layout->prunable_indices();
  std::vector<double> s(idx.size(), 0.0);
  double mx = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) mx = std::max(mx, std::abs(params.values[idx[i]]));
  if (mx == 0.0) return s;
  for (std::size_t i = 0; i < idx.size(); ++i) s[i] = std::abs(params.values[idx[i]]) / mx;
  return s;
}

std::vector<double> coherence_score(const ClusterSignals& signals, const nn::Layout& layout) {
  signals.validate(layout.total_size());
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(signals.member_params.size());
  std::vector<double> s(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t j = idx[i];
    double mean = 0.0;
    for (const auto& w : signals.member_params) mean += w[j];
    mean /= k;
    double var = 0.0;
    for (const auto& w : signals.member_params) {
      const double d = w[j] - mean;
      var += d * d;
    }
    var /= k;
    s[i] = 1.0 / (1.0 + var);
  }
  return s;
}

std::vector<double> consistency_score(const ClusterSignals& signals, const nn::Layout& layout) {
  signals.validate(layout.total_size());
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(signals.member_grads.size());
  std::vector<double> s(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t j = idx[i];
    double acc = 0.0;
    for (const auto& g : signals.member_grads)
      acc += g[j] > 0.0 ? 1.0 : (g[j] < 0.0 ? -1.0 : 0.0);
    s[i] = std::abs(acc / k);
  }
  return s;
}

std::vector<double> importance(const nn::ParamSet& params, const ClusterSignals& signals,
                               const ScoreWeights& weights) {
  weights.validate();
  const std::vector<double> mag = magnitude_score(params);
  const std::vector<double> coh = coherence_score(signals, *params.layout);
  const std::vector<double> con = consistency_score(signals, *params.layout);
  std::vector<double> s(mag.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = weights.alpha * mag[i] + weights.beta * coh[i] + weights.gamma * con[i];
  return s;
}

std::vector<double> regrow_signal(const ClusterSignals& signals, const nn::Layout& layout) {
  signals.validate(layout.total_size());
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(signals.member_grads.size());
  std::vector<double> s(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    double acc = 0.0;
    for (const auto& g : signals.member_grads) acc += g[idx[i]];
    s[i] = std::abs(acc / k);
  }
  return s;
}

namespace {

// Indices of the `count` smallest (or largest) values among `candidates`,
// ties toward the lower index. Candidates must be ascending.
std::vector<std::size_t> select_by_score(const std::vector<std::size_t>& candidates,
                                         std::span<const double> scores, std::size_t count,
                                         bool largest) {
  std::vector<std::size_t> order = candidates;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return largest ? scores[a] > scores[b] : scores[a] < scores[b];
    return a < b;
  });
  order.resize(std::min(count, order.size()));
  return order;
}

}  // namespace

Mask one_shot_prune(std::span<const double> scores, double sparsity) {
  if (sparsity < 0.0 || sparsity >= 1.0) throw ConfigError("one_shot_prune: sparsity in [0,1)");
  Mask mask(scores.size(), true);
  const auto target =
      static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(scores.size())));
  std::vector<std::size_t> all(scores.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i : select_by_score(all, scores, target, false)) mask.set(i, false);
  return mask;
}

StepReport prune_heal_step(Mask& mask, std::span<const double> scores,
                           std::span<const double> grow_signal, const PruneSchedule& schedule,
                           int round) {
  schedule.validate();
  if (!schedule.is_step_round(round))
    throw ConfigError("prune_heal_step: round is not a scheduled step");
  const std::size_t n = mask.size();
  if (scores.size() != n || grow_signal.size() != n)
    throw ConfigError("prune_heal_step: score size does not match mask");

  StepReport rep;
  rep.round = round;
  rep.sparsity_before = mask.sparsity();

  const auto target_zeros =
      static_cast<std::size_t>(std::llround(schedule.target_sparsity * static_cast<double>(n)));
  const std::size_t zeros = mask.zero_count();
  const std::size_t active = mask.active_count();

  int remaining = (schedule.total_rounds - round) / schedule.frequency;
  const bool final_step = remaining < 1;
  if (final_step) remaining = 1;

  std::size_t deficit;
  if (final_step) {
    deficit = target_zeros > zeros ? target_zeros - zeros : 0;  // land exactly on target
  } else {
    const double ds = (schedule.target_sparsity - mask.sparsity()) / remaining;
    const auto want = std::llround(ds * static_cast<double>(n));
    deficit = want > 0 ? static_cast<std::size_t>(want) : 0;
    if (zeros + deficit > target_zeros) deficit = target_zeros > zeros ? target_zeros - zeros : 0;
  }

  auto churn = static_cast<std::size_t>(
      std::floor(schedule.churn_rate * static_cast<double>(active)));
  churn = std::min(churn, zeros);  // regrowth can only draw on already-inactive weights

  std::size_t n_prune = churn + deficit;
  if (n_prune >= active) {  // degenerate: keep at least one active weight
    n_prune = active > 0 ? active - 1 : 0;
    rep.degenerate = true;
  }

  std::vector<std::size_t> active_idx, inactive_idx;
  active_idx.reserve(active);
  inactive_idx.reserve(zeros);
  for (std::size_t i = 0; i < n; ++i) (mask.active(i) ? active_idx : inactive_idx).push_back(i);

  for (std::size_t i : select_by_score(active_idx, scores, n_prune, false)) mask.set(i, false);
  for (std::size_t i : select_by_score(inactive_idx, grow_signal, churn, true)) mask.set(i, true);

  rep.churn = churn;
  rep.deficit = deficit;
  rep.pruned = n_prune;
  rep.grown = churn;
  rep.sparsity_after = mask.sparsity();
  return rep;
}

void apply_mask(nn::ParamSet& params, const Mask& mask) {
  const auto& idx = params.layout->prunable_indices();
  if (mask.size() != idx.size()) throw ConfigError("apply_mask: mask/layout size mismatch");
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (!mask.active(i)) params.values[idx[i]] = 0.0;
}

std::uint64_t count_nonzero(std::span<const double> values) {
  std::uint64_t n = 0;
  for (double v : values) n += v != 0.0;
  return n;
}

}  // namespace caafp::prune
