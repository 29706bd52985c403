#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "caafp/common.hpp"

namespace caafp::oracle {

GradCheck gradient_check(const nn::Network& net, const nn::ParamSet& params,
                         const nn::Batch& batch, std::span<const int> labels,
                         const nn::ParamSet* reference, double lambda,
                         const nn::ForwardOptions& opts, double h) {
  nn::LossResult analytic = net.loss_and_grad(params, batch, labels, reference, lambda, opts);
  nn::ParamSet probe = params;
  GradCheck out;
  out.params_checked = params.values.size();
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double w0 = params.values[i];
    probe.values[i] = w0 + h;
    const double up = net.loss_and_grad(probe, batch, labels, reference, lambda, opts).loss;
    probe.values[i] = w0 - h;
    const double down = net.loss_and_grad(probe, batch, labels, reference, lambda, opts).loss;
    probe.values[i] = w0;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic.grads[i]), std::abs(numeric), 1e-6});
    out.max_rel_err = std::max(out.max_rel_err, std::abs(analytic.grads[i] - numeric) / denom);
  }
  return out;
}

cluster::ClusterAssignment linkage_bruteforce(const std::vector<double>& dist, int n, int k) {
  if (n < 1) throw ConfigError("linkage_bruteforce: no clients");
  if (k < 1 || k > n) throw ConfigError("linkage_bruteforce: k must be in [1, n]");
  if (dist.size() != static_cast<std::size_t>(n) * n)
    throw ConfigError("linkage_bruteforce: matrix size mismatch");

  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(i)] = {i};

  auto avg_link = [&](const std::vector<int>& a, const std::vector<int>& b) {
    double sum = 0.0;
    for (int x : a)
      for (int y : b) sum += dist[static_cast<std::size_t>(x) * n + y];
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };

  while (static_cast<int>(groups.size()) > k) {
    const int m = static_cast<int>(groups.size());
    int bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        const double d = avg_link(groups[static_cast<std::size_t>(i)],
                                  groups[static_cast<std::size_t>(j)]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    auto& gi = groups[static_cast<std::size_t>(bi)];
    auto& gj = groups[static_cast<std::size_t>(bj)];
    gi.insert(gi.end(), gj.begin(), gj.end());
    groups.erase(groups.begin() + bj);
  }

  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  cluster::ClusterAssignment out;
  out.members = std::move(groups);
  out.cluster_of.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t c = 0; c < out.members.size(); ++c)
    for (int i : out.members[c]) out.cluster_of[static_cast<std::size_t>(i)] = static_cast<int>(c);
  out.validate();
  return out;
}

std::vector<double> magnitude_scalar(const nn::ParamSet& params) {
  const auto& idx = params.layout->prunable_indices();
  double mx = 0.0;
  for (std::size_t j : idx)
    if (std::abs(params.values[j]) > mx) mx = std::abs(params.values[j]);
  std::vector<double> s;
  s.reserve(idx.size());
  for (std::size_t j : idx) s.push_back(mx == 0.0 ? 0.0 : std::abs(params.values[j]) / mx);
  return s;
}

std::vector<double> coherence_scalar(const prune::ClusterSignals& sig, const nn::Layout& layout) {
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(sig.member_params.size());
  std::vector<double> s;
  s.reserve(idx.size());
  for (std::size_t j : idx) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& w : sig.member_params) {
      sum += w[j];
      sumsq += w[j] * w[j];
    }
    const double mean = sum / k;
    const double var = sumsq / k - mean * mean;
    s.push_back(1.0 / (1.0 + var));
  }
  return s;
}

std::vector<double> consistency_scalar(const prune::ClusterSignals& sig,
                                       const nn::Layout& layout) {
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(sig.member_grads.size());
  std::vector<double> s;
  s.reserve(idx.size());
  for (std::size_t j : idx) {
    double signs = 0.0;
    for (const auto& g : sig.member_grads) {
      if (g[j] > 0.0) signs += 1.0;
      if (g[j] < 0.0) signs -= 1.0;
    }
    s.push_back(std::abs(signs) / k);
  }
  return s;
}

std::vector<double> regrow_scalar(const prune::ClusterSignals& sig, const nn::Layout& layout) {
  const auto& idx = layout.prunable_indices();
  const double k = static_cast<double>(sig.member_grads.size());
  std::vector<double> s;
  s.reserve(idx.size());
  for (std::size_t j : idx) {
    double sum = 0.0;
    for (const auto& g : sig.member_grads) sum += g[j];
    s.push_back(std::abs(sum) / k);
  }
  return s;
}

std::vector<double> importance_scalar(const nn::ParamSet& params, const prune::ClusterSignals& sig,
                                      const prune::ScoreWeights& w) {
  const auto mag = magnitude_scalar(params);
  const auto coh = coherence_scalar(sig, *params.layout);
  const auto con = consistency_scalar(sig, *params.layout);
  std::vector<double> s(mag.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = w.alpha * mag[i] + w.beta * coh[i] + w.gamma * con[i];
  return s;
}

namespace {

nn::ArchitectureSpec tiny_arch() {
  nn::ArchitectureSpec a;
  a.timesteps = 12;
  a.channels = 2;
  a.num_classes = 3;
  a.conv_filters = 3;
  a.kernel_size = 3;
  a.pool_size = 2;
  a.dense_units = 4;
  return a;
}

nn::Batch random_batch(const nn::ArchitectureSpec& a, int count, Rng& rng) {
  nn::Batch b;
  b.count = count;
  b.timesteps = a.timesteps;
  b.channels = a.channels;
  b.x.resize(static_cast<std::size_t>(count) * a.timesteps * a.channels);
  for (double& v : b.x) v = uniform_double(rng, -1.0, 1.0);
  return b;
}

bool report(std::ostream& os, const char* name, bool ok, double detail) {
  os << (ok ? "ok   " : "FAIL ") << name << " (" << detail << ")\n";
  return ok;
}

}  // namespace

int run_all(std::ostream& os) {
  bool all = true;
  Rng rng = make_rng(20260814);

  {
    const nn::ArchitectureSpec arch = tiny_arch();
    nn::Network net(arch);
    double worst = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
      nn::ParamSet params = net.init_params(rng());
      // Shift every parameter (biases included) off zero: at an exact ReLU
      // kink the two-sided difference and the subgradient convention part
      // ways, which is a property of the objective, not a gradient bug.
      for (double& v : params.values) v += uniform_double(rng, 0.05, 0.2);
      nn::ParamSet ref = net.init_params(rng());
      nn::Batch batch = random_batch(arch, 3, rng);
      std::vector<int> labels = {0, 2, 1};
      nn::ForwardOptions fo;
      fo.training = trial % 2 == 1;
      fo.dropout_seed = rng();
      const double lambda = trial % 3 == 0 ? 0.0 : 0.1;
      GradCheck gc = gradient_check(net, params, batch, labels,
                                    lambda > 0.0 ? &ref : nullptr, lambda, fo);
      worst = std::max(worst, gc.max_rel_err);
    }
    all &= report(os, "gradient finite differences", worst < 1e-4, worst);
  }

  {
    bool agree = true;
    int checked = 0;
    for (int trial = 0; trial < 40 && agree; ++trial) {
      const int n = 3 + static_cast<int>(bounded(rng, 6));
      const int k = 1 + static_cast<int>(bounded(rng, static_cast<std::size_t>(n)));
      std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const double d = uniform_double(rng, 0.0, 2.0);
          dist[static_cast<std::size_t>(i) * n + j] = d;
          dist[static_cast<std::size_t>(j) * n + i] = d;
        }
      agree = cluster::agglomerative_cluster(dist, n, k).cluster_of ==
              linkage_bruteforce(dist, n, k).cluster_of;
      ++checked;
    }
    all &= report(os, "average linkage vs direct enumeration", agree, checked);
  }

  {
    const nn::ArchitectureSpec arch = tiny_arch();
    nn::Network net(arch);
    nn::ParamSet params = net.init_params(rng());
    prune::ClusterSignals sig;
    for (int m = 0; m < 4; ++m) {
      std::vector<double> w(params.values.size()), g(params.values.size());
      for (auto& v : w) v = uniform_double(rng, -1.0, 1.0);
      for (auto& v : g) v = uniform_double(rng, -0.5, 0.5);
      g[7] = 0.0;  // exercise the sign(0) branch
      sig.member_params.push_back(std::move(w));
      sig.member_grads.push_back(std::move(g));
    }
    prune::ScoreWeights weights{0.3, 0.3, 0.4};
    const auto a = prune::importance(params, sig, weights);
    const auto b = importance_scalar(params, sig, weights);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    const auto ra = prune::regrow_signal(sig, *params.layout);
    const auto rb = regrow_scalar(sig, *params.layout);
    for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, std::abs(ra[i] - rb[i]));
    all &= report(os, "importance scores vs scalar loops", worst < 1e-12, worst);
  }

  {
    prune::Mask mask(100, true);
    std::vector<double> scores(100), grow(100);
    for (std::size_t i = 0; i < 100; ++i) {
      scores[i] = static_cast<double>((i * 37) % 100);
      grow[i] = static_cast<double>((i * 53) % 100);
    }
    prune::PruneSchedule sched;
    sched.start_sparsity = 0.3;
    sched.target_sparsity = 0.7;
    sched.frequency = 10;
    sched.churn_rate = 0.05;
    sched.total_rounds = 50;
    for (std::size_t i = 0; i < 30; ++i) mask.set(i, false);  // S = 0.3
    prune::StepReport rep = prune::prune_heal_step(mask, scores, grow, sched, 10);
    const bool ok = rep.pruned == 13 && rep.grown == 3 && rep.churn == 3 && rep.deficit == 10 &&
                    std::abs(rep.sparsity_after - 0.40) < 1e-12;
    all &= report(os, "prune-heal worked example", ok, rep.sparsity_after);
  }

  return all ? 0 : 1;
}

}  // namespace caafp::oracle
