// End-to-end acceptance gate. Each check prints exactly one PASS/FAIL/SKIP
// line; the exit code is the number of failures. Checks are independent, so
// one failure never hides another.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "caafp/config.hpp"
#include "caafp/federation.hpp"
#include "cli.hpp"
#include "oracle.hpp"
#include "testutil.hpp"

using namespace caafp;

namespace {

enum class Outcome { fail = 0, pass = 1, skip = 2 };

struct Check {
  bool ok = true;
  std::string note;

  void require(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (!note.empty()) note += "; ";
    note += what;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---- gradient correctness -------------------------------------------------

nn::ArchitectureSpec grad_shape(int which) {
  nn::ArchitectureSpec a;
  switch (which) {
    case 0:  // smallest non-trivial stack
      a.timesteps = 8; a.channels = 1; a.num_classes = 2;
      a.conv_filters = 1; a.kernel_size = 1; a.pool_size = 2; a.dense_units = 1;
      break;
    case 1:  // the usual test stack
      a.timesteps = 16; a.channels = 2; a.num_classes = 3;
      a.conv_filters = 3; a.kernel_size = 5; a.pool_size = 2; a.dense_units = 4;
      break;
    case 2:  // wider kernel-3 stack
      a.timesteps = 16; a.channels = 3; a.num_classes = 4;
      a.conv_filters = 2; a.kernel_size = 3; a.pool_size = 2; a.dense_units = 5;
      break;
    case 3:  // many channels, many classes
      a.timesteps = 10; a.channels = 4; a.num_classes = 5;
      a.conv_filters = 4; a.kernel_size = 3; a.pool_size = 2; a.dense_units = 6;
      break;
    default:  // kernel-1 conv with an odd window
      a.timesteps = 9; a.channels = 2; a.num_classes = 3;
      a.conv_filters = 2; a.kernel_size = 1; a.pool_size = 2; a.dense_units = 2;
      break;
  }
  return a;
}

Outcome check_gradients(Check& c) {
  Rng rng = make_rng(901);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const nn::ArchitectureSpec a = grad_shape(i % 5);
    nn::Network net(a);
    nn::ParamSet params = net.init_params(1000 + static_cast<std::uint64_t>(i));
    // Zero biases put ReLU inputs exactly on the kink, where central
    // differences and the subgradient convention legitimately disagree.
    test::nudge_off_zero(params.values, rng);
    nn::ParamSet reference = net.init_params(2000 + static_cast<std::uint64_t>(i));

    nn::Batch batch;
    batch.count = 3;
    batch.timesteps = a.timesteps;
    batch.channels = a.channels;
    for (int j = 0; j < batch.count * a.timesteps * a.channels; ++j)
      batch.x.push_back(uniform_double(rng, -1.0, 1.0));
    std::vector<int> labels;
    for (int j = 0; j < batch.count; ++j)
      labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(a.num_classes)));

    const double lambda = (i % 4 < 2) ? 0.0 : (i % 4 == 2 ? 0.1 : 0.5);
    nn::ForwardOptions opts;
    opts.training = (i % 2) == 1;  // odd instances exercise dropout backprop
    opts.dropout_seed = 40 + static_cast<std::uint64_t>(i);
    const auto res = oracle::gradient_check(net, params, batch, labels,
                                            lambda > 0.0 ? &reference : nullptr, lambda, opts);
    worst = std::max(worst, res.max_rel_err);
    c.require(res.params_checked == params.values.size(), "not every parameter was probed");
  }
  c.require(worst < 1e-4, "max relative error " + fmt(worst));
  c.note = "20 instances, worst rel err " + fmt(worst);
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- schedule exactness ----------------------------------------------------

Outcome check_schedule(Check& c) {
  Rng rng = make_rng(902);
  const std::size_t n = 211;  // prime, so nothing divides evenly by accident
  const double starts[] = {0.0, 0.25};
  const double targets[] = {0.4, 0.7, 0.95};
  const int freqs[] = {1, 3, 7};
  const double churns[] = {0.0, 0.05, 0.15};
  const int lengths[] = {21, 50};
  int combos = 0;
  for (double s0 : starts)
    for (double s1 : targets)
      for (int f : freqs)
        for (double rho : churns)
          for (int t3 : lengths) {
            ++combos;
            prune::PruneSchedule sched;
            sched.start_sparsity = s0;
            sched.target_sparsity = s1;
            sched.frequency = f;
            sched.churn_rate = rho;
            sched.total_rounds = t3;

            std::vector<double> imp(n), grow(n);
            for (auto& v : imp) v = unit_double(rng);
            prune::Mask mask = prune::one_shot_prune(imp, s0);
            double prev = mask.sparsity();
            for (int round = 1; round <= t3; ++round) {
              if (!sched.is_step_round(round)) continue;
              for (auto& v : imp) v = unit_double(rng);
              for (auto& v : grow) v = unit_double(rng);
              const prune::Mask before = mask;
              const auto rep = prune::prune_heal_step(mask, imp, grow, sched, round);
              c.require(mask.sparsity() >= prev - 1e-12, "sparsity decreased");
              c.require(mask.sparsity() <= s1 + 0.5 / static_cast<double>(n),
                        "target overshot");
              if (before.zero_count() == mask.zero_count()) {
                // Constant-sparsity step: churn must conserve the active count
                // exactly, one regrowth per prune.
                c.require(rep.pruned == rep.grown, "churn did not conserve actives");
                c.require(before.flip_count(mask) == rep.pruned + rep.grown,
                          "regrowth overlapped the pruned set");
              }
              prev = mask.sparsity();
              if (!c.ok) return Outcome::fail;
            }
            c.require(std::abs(mask.sparsity() - s1) <= 1.0 / static_cast<double>(n),
                      "final sparsity " + fmt(mask.sparsity()) + " missed " + fmt(s1));
            if (!c.ok) return Outcome::fail;
          }
  c.note = std::to_string(combos) + " grid points, N=" + std::to_string(n);
  return Outcome::pass;
}

// ---- clustering vs brute force ----------------------------------------------

Outcome check_clustering(Check& c) {
  Rng rng = make_rng(903);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 7);  // 2..8
    const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double v = uniform_double(rng, 0.0, 2.0);
        dist[static_cast<std::size_t>(i) * n + j] = v;
        dist[static_cast<std::size_t>(j) * n + i] = v;
      }

    const auto fast = cluster::agglomerative_cluster(dist, n, k);
    const auto slow = oracle::linkage_bruteforce(dist, n, k);
    c.require(cluster::rand_index(fast.cluster_of, slow.cluster_of) == 1.0,
              "trial " + std::to_string(trial) + ": partitions disagree");

    // Scale invariance: distances are only ever compared, never mixed.
    auto scaled = dist;
    for (double& v : scaled) v *= 37.5;
    const auto rescaled = cluster::agglomerative_cluster(scaled, n, k);
    c.require(cluster::rand_index(fast.cluster_of, rescaled.cluster_of) == 1.0,
              "trial " + std::to_string(trial) + ": scaling changed the partition");

    // Relabeling clients permutes the answer with them.
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    deterministic_shuffle(perm, rng);
    std::vector<double> pd(dist.size());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        pd[static_cast<std::size_t>(perm[i]) * n + perm[j]] =
            dist[static_cast<std::size_t>(i) * n + j];
    const auto permuted = cluster::agglomerative_cluster(pd, n, k);
    std::vector<int> mapped(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) mapped[static_cast<std::size_t>(i)] =
        permuted.cluster_of[static_cast<std::size_t>(perm[i])];
    c.require(cluster::rand_index(mapped, fast.cluster_of) == 1.0,
              "trial " + std::to_string(trial) + ": permutation broke the partition");
    if (!c.ok) return Outcome::fail;
  }
  c.note = "200 random matrices, n in [2,8], plus invariance properties";
  return Outcome::pass;
}

// ---- worked mask-evolution example ------------------------------------------

Outcome check_worked_example(Check& c) {
  const std::size_t n = 100;
  prune::Mask mask(n, true);
  for (std::size_t i = 0; i < 30; ++i) mask.set(i, false);  // sparsity 0.30
  std::vector<double> scores(n), grow(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = static_cast<double>((i * 37) % 100);
    grow[i] = static_cast<double>((i * 53) % 100);
  }
  prune::PruneSchedule sched;
  sched.start_sparsity = 0.3;
  sched.target_sparsity = 0.7;
  sched.frequency = 10;
  sched.churn_rate = 0.05;
  sched.total_rounds = 50;

  const auto rep = prune::prune_heal_step(mask, scores, grow, sched, 10);
  c.require(rep.deficit == 10, "deficit " + std::to_string(rep.deficit) + " != 10");
  c.require(rep.churn == 3, "churn " + std::to_string(rep.churn) + " != 3");
  c.require(rep.pruned == 13, "pruned " + std::to_string(rep.pruned) + " != 13");
  c.require(rep.grown == 3, "grown " + std::to_string(rep.grown) + " != 3");
  c.require(std::abs(rep.sparsity_after - 0.40) < 1e-15,
            "next sparsity " + fmt(rep.sparsity_after) + " != 0.40");
  c.require(mask.zero_count() == 40, "mask does not hold 40 zeros");
  c.note = "prune 13, regrow 3, 0.30 -> 0.40";
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- score formulas vs scalar loops -----------------------------------------

Outcome check_scores(Check& c) {
  Rng rng = make_rng(905);
  const auto arch = test::tiny_arch();
  nn::Network net(arch);
  const prune::ScoreWeights mixes[] = {
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.25, 0.25, 0.5}};
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    nn::ParamSet p = net.init_params(3000 + static_cast<std::uint64_t>(rep));
    for (double& v : p.values) v = uniform_double(rng, -1.0, 1.0);
    const auto& idx = p.layout->prunable_indices();
    p.values[idx[rep % idx.size()]] = 0.0;  // exercise the all-important zero

    prune::ClusterSignals s;
    for (int m = 0; m < 4; ++m) {
      std::vector<double> w(p.values.size()), g(p.values.size());
      for (auto& v : w) v = uniform_double(rng, -1.0, 1.0);
      for (auto& v : g) v = uniform_double(rng, -0.5, 0.5);
      g[idx[(rep + m) % idx.size()]] = 0.0;  // sign(0) path
      s.member_params.push_back(std::move(w));
      s.member_grads.push_back(std::move(g));
    }

    auto diff = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double d = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
      return d;
    };
    const auto& layout = *net.layout();
    worst = std::max(worst, diff(prune::magnitude_score(p), oracle::magnitude_scalar(p)));
    worst = std::max(worst,
                     diff(prune::coherence_score(s, layout), oracle::coherence_scalar(s, layout)));
    worst = std::max(worst, diff(prune::consistency_score(s, layout),
                                 oracle::consistency_scalar(s, layout)));
    worst = std::max(worst, diff(prune::regrow_signal(s, layout),
                                 oracle::regrow_scalar(s, layout)));
    const auto& w = mixes[rep % 4];
    worst = std::max(worst, diff(prune::importance(p, s, w), oracle::importance_scalar(p, s, w)));
  }
  c.require(worst < 1e-12, "max deviation " + fmt(worst));
  c.note = "10 random populations, worst deviation " + fmt(worst);
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- communication accounting -----------------------------------------------

double comm_run(int timesteps, int channels, double target_sparsity) {
  fed::ExperimentConfig cfg;
  cfg.method = fed::Method::oneshot_prune;
  cfg.prune_rounds = 50;
  cfg.finetune_epochs = 0;
  cfg.local_epochs = 0;  // traffic model only; no training needed
  cfg.clients_per_round = 10;
  cfg.eval_every = 50;
  cfg.schedule.start_sparsity = 0.0;
  cfg.schedule.target_sparsity = target_sparsity;
  cfg.seed = 17;

  nn::ArchitectureSpec a;  // production stack, data geometry swapped in
  a.timesteps = timesteps;
  a.channels = channels;
  a.num_classes = 6;
  std::vector<data::ClientDataset> clients;
  for (int i = 0; i < 12; ++i) clients.push_back(test::make_client(i, a, 4, 2, 600 + i));
  return fed::run_experiment(cfg, clients).total_comm_mb;
}

Outcome check_comm(Check& c) {
  struct Geometry {
    const char* name;
    int timesteps, channels;
    double reference_mb;  // known-good dense 50-round total for this shape
  };
  const Geometry geos[] = {{"200x3", 200, 3, 483.0}, {"128x9", 128, 9, 347.0}};
  std::string measured;
  for (const auto& g : geos) {
    const double dense = comm_run(g.timesteps, g.channels, 0.0);
    const double sparse = comm_run(g.timesteps, g.channels, 0.7);
    c.require(std::abs(dense - g.reference_mb) <= 0.10 * g.reference_mb,
              std::string(g.name) + " dense " + fmt(dense) + " MB outside " +
                  fmt(g.reference_mb) + " +-10%");
    c.require(sparse <= 0.40 * dense, std::string(g.name) + " sparse " + fmt(sparse) +
                                          " MB > 0.40 x " + fmt(dense));
    if (!measured.empty()) measured += ", ";
    measured += std::string(g.name) + " dense " + fmt(dense) + " sparse " + fmt(sparse);
  }
  c.note = measured;
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- synthetic end-to-end ----------------------------------------------------

fed::ExperimentConfig synth_cfg() {
  fed::ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.method = fed::Method::caafp;
  cfg.dataset = "synth";
  cfg.synth = data::SynthSpec{};  // 3 clusters x 4 clients, low noise
  cfg.synth.seed = seed_mix({cfg.seed, seed_tag::synth});
  cfg.scenario.seed = seed_mix({cfg.seed, seed_tag::scenario});
  cfg.arch.conv_filters = 8;
  cfg.arch.dense_units = 16;
  cfg.warmup_rounds = 2;
  cfg.stabilize_rounds = 3;
  cfg.prune_rounds = 20;
  cfg.finetune_epochs = 5;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.clusters = 3;
  cfg.clients_per_round = 6;
  cfg.schedule.start_sparsity = 0.3;
  cfg.schedule.target_sparsity = 0.7;
  cfg.schedule.frequency = 5;
  cfg.schedule.churn_rate = 0.05;
  cfg.eval_every = 10;
  return cfg;
}

Outcome check_synth_end_to_end(Check& c) {
  // (a) + (b): recovery of the planted clusters and pruned-vs-dense accuracy.
  auto cfg = synth_cfg();
  const auto clients = cli::load_clients(cfg);
  std::vector<int> truth;
  for (int i = 0; i < cfg.synth.clusters * cfg.synth.clients_per_cluster; ++i)
    truth.push_back(i / cfg.synth.clients_per_cluster);

  const auto adaptive = fed::run_experiment(cfg, clients);
  const double rand = cluster::rand_index(adaptive.assignment.cluster_of, truth);
  c.require(rand >= 0.9, "cluster recovery Rand index " + fmt(rand) + " < 0.9");

  auto dense_cfg = cfg;
  dense_cfg.method = fed::Method::dense_clustered;
  const auto dense = fed::run_experiment(dense_cfg, clients);
  const double gap_dense = dense.final_metrics.mu - adaptive.final_metrics.mu;
  c.require(gap_dense <= 0.03, "pruned accuracy " + fmt(adaptive.final_metrics.mu) +
                                   " more than 3 points under dense " +
                                   fmt(dense.final_metrics.mu));
  c.require(std::abs(adaptive.final_metrics.mean_sparsity - 0.7) <= 0.01,
            "pruned run did not land near 0.7 sparsity");

  // (c): concept shift plus one-class clients, no fine-tuning. A single global
  // sparse model has to average conflicting label mappings; per-cluster models
  // never see the conflict.
  auto shift_cfg = synth_cfg();
  shift_cfg.synth.label_shift = true;
  shift_cfg.scenario.kind = data::ScenarioKind::non_iid_k;
  shift_cfg.scenario.classes_per_client = 1;
  shift_cfg.finetune_epochs = 0;
  const auto shift_clients = cli::load_clients(shift_cfg);

  const auto adaptive_shift = fed::run_experiment(shift_cfg, shift_clients);
  auto oneshot_cfg = shift_cfg;
  oneshot_cfg.method = fed::Method::oneshot_prune;
  const auto oneshot = fed::run_experiment(oneshot_cfg, shift_clients);
  const double gap = adaptive_shift.final_metrics.mu - oneshot.final_metrics.mu;
  c.require(gap >= 0.10, "one-class advantage " + fmt(gap) + " < 10 points (adaptive " +
                             fmt(adaptive_shift.final_metrics.mu) + ", oneshot " +
                             fmt(oneshot.final_metrics.mu) + ")");

  c.note = "Rand " + fmt(rand) + ", pruned " + fmt(adaptive.final_metrics.mu) + " vs dense " +
           fmt(dense.final_metrics.mu) + ", one-class gap " + fmt(gap);
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- optional real-data soft reproduction -------------------------------------

Outcome check_real_data(Check& c) {
  const char* dir = std::getenv("CAAFP_UCIHAR_DIR");
  if (!dir || !*dir) {
    c.note = "set CAAFP_UCIHAR_DIR to a local copy of the 128x9 dataset to enable";
    return Outcome::skip;
  }
  fed::ExperimentConfig cfg;
  cfg.method = fed::Method::caafp;
  cfg.dataset = "ucihar";
  cfg.dataset_path = dir;
  cfg.warmup_rounds = 0;
  cfg.stabilize_rounds = 0;
  cfg.prune_rounds = 50;
  cfg.finetune_epochs = 25;
  cfg.schedule.start_sparsity = 0.3;
  cfg.schedule.target_sparsity = 0.7;
  cfg.seed = 1;
  const auto clients = cli::load_clients(cfg);

  auto frozen_cfg = cfg;
  frozen_cfg.finetune_epochs = 0;
  const auto frozen = fed::run_experiment(frozen_cfg, clients);
  const auto tuned = fed::run_experiment(cfg, clients);
  c.require(tuned.final_metrics.mu >= 0.93,
            "mean accuracy " + fmt(tuned.final_metrics.mu) + " < 0.93");
  c.require(tuned.final_metrics.mu > frozen.final_metrics.mu,
            "fine-tuning 0 -> 25 epochs did not increase mean accuracy");
  c.note = "mu " + fmt(tuned.final_metrics.mu) + " (no fine-tuning " +
           fmt(frozen.final_metrics.mu) + ")";
  return c.ok ? Outcome::pass : Outcome::fail;
}

// ---- byte-level determinism ----------------------------------------------------

std::string run_to_csv(const fed::ExperimentConfig& cfg,
                       const std::vector<data::ClientDataset>& clients) {
  const auto res = fed::run_experiment(cfg, clients);
  std::ostringstream os;
  metrics::RunMeta meta{fed::method_name(cfg.method), cfg.dataset, cli::scenario_label(cfg),
                        cfg.seed};
  metrics::write_rounds_csv(os, meta, res.rounds, res.final_metrics);
  const metrics::ResultRow row = cli::result_row(cfg, res);
  metrics::write_results_csv(os, std::span<const metrics::ResultRow>(&row, 1));
  return os.str();
}

Outcome check_determinism(Check& c) {
  auto cfg = synth_cfg();
  cfg.prune_rounds = 10;
  cfg.eval_every = 2;
  cfg.finetune_epochs = 2;
  const auto clients = cli::load_clients(cfg);
  const std::string first = run_to_csv(cfg, clients);
  const std::string second = run_to_csv(cfg, clients);
  c.require(!first.empty(), "no CSV produced");
  c.require(first == second, "repeated run produced different CSV bytes");
  c.note = std::to_string(first.size()) + " CSV bytes compared";
  return c.ok ? Outcome::pass : Outcome::fail;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* label;
    Outcome (*fn)(Check&);
    double budget_secs;  // 0 means no limit enforced
  };
  const Entry entries[] = {
      {1, "analytic gradients match central finite differences", check_gradients, 60},
      {2, "sparsity schedule lands exactly and conserves churn", check_schedule, 60},
      {3, "agglomerative clustering matches brute-force linkage", check_clustering, 60},
      {4, "worked mask-evolution step arithmetic", check_worked_example, 0},
      {5, "importance scores match the scalar-loop reimplementation", check_scores, 0},
      {6, "communication totals for both reference geometries", check_comm, 0},
      {7, "synthetic end-to-end: recovery, accuracy, concept-shift gap",
       check_synth_end_to_end, 600},
      {8, "real-data soft reproduction (optional)", check_real_data, 0},
      {9, "byte-identical CSV under a repeated seed", check_determinism, 0},
  };

  int failures = 0;
  for (const auto& e : entries) {
    Check c;
    Outcome out = Outcome::fail;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = e.fn(c);
    } catch (const std::exception& ex) {
      c.note = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out == Outcome::pass && e.budget_secs > 0 && secs > e.budget_secs) {
      out = Outcome::fail;
      c.note += (c.note.empty() ? "" : "; ") + std::string("over the ") +
                fmt(e.budget_secs) + "s budget";
    }
    const char* verdict = out == Outcome::pass ? "PASS" : out == Outcome::skip ? "SKIP" : "FAIL";
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", verdict, e.id, e.label, secs,
                c.note.empty() ? "" : "; ", c.note.c_str());
    std::fflush(stdout);
    if (out == Outcome::fail) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
