#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>

#include "caafp/binio.hpp"
#include "caafp/config.hpp"
#include "caafp/federation.hpp"

namespace caafp::fed {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'A', 'F', 'P', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_metrics(io::BinWriter& w, const metrics::RoundMetrics& m) {
  w.i32(m.round);
  w.str(m.phase);
  w.vec_f64(m.client_accuracy);
  w.f64(m.mu);
  w.f64(m.sigma);
  w.f64(m.round_mb);
  w.f64(m.cumulative_mb);
  w.f64(m.mean_sparsity);
}

metrics::RoundMetrics read_metrics(io::BinReader& r) {
  metrics::RoundMetrics m;
  m.round = r.i32();
  m.phase = r.str();
  m.client_accuracy = r.vec_f64();
  m.mu = r.f64();
  m.sigma = r.f64();
  m.round_mb = r.f64();
  m.cumulative_mb = r.f64();
  m.mean_sparsity = r.f64();
  return m;
}

}  // namespace

ExperimentDriver::ExperimentDriver(const std::vector<data::ClientDataset>* clients)
    : clients_(clients) {}

ExperimentDriver::ExperimentDriver(const ExperimentConfig& cfg,
                                   const std::vector<data::ClientDataset>* clients)
    : cfg_(cfg), clients_(clients) {
  if (!clients_ || clients_->empty()) throw ConfigError("driver: empty client population");
  const data::ClientDataset& first = clients_->front();
  cfg_.arch.timesteps = first.timesteps;
  cfg_.arch.channels = first.channels;
  cfg_.arch.num_classes = first.num_classes;
  cfg_.schedule.total_rounds = cfg_.prune_rounds;
  cfg_.validate(clients_->size());
  for (const auto& c : *clients_) {
    c.validate();
    if (c.timesteps != first.timesteps || c.channels != first.channels ||
        c.num_classes != first.num_classes)
      throw DataError("driver: clients disagree on sample shape");
    if (c.test_count() == 0)
      throw DataError("driver: every client needs a test split for evaluation");
  }
  net_ = std::make_unique<nn::Network>(cfg_.arch);
  global_params_ = net_->init_params(seed_mix({cfg_.seed, seed_tag::init}));
  opt_states_.assign(clients_->size(),
                     nn::OptimizerState::fresh(net_->layout()->total_size()));
}

const RunResult& ExperimentDriver::result() const {
  if (stage_ != Stage::done) throw ConfigError("driver: run not finished");
  return result_;
}

void ExperimentDriver::run_to_completion() {
  while (step()) {
  }
}

bool ExperimentDriver::step() {
  while (true) {
    switch (stage_) {
      case Stage::warmup:
        if (round_in_stage_ < cfg_.warmup_rounds) {
          do_warmup_round();
          return true;
        }
        enter_stage(Stage::clustering);
        break;
      case Stage::clustering:
        do_clustering();
        enter_stage(Stage::stabilize);
        return true;
      case Stage::stabilize:
        if (round_in_stage_ < cfg_.stabilize_rounds) {
          if (cfg_.clustered())
            do_cluster_round(false);
          else
            do_oneshot_round();  // pre-prune rounds stay dense
          return true;
        }
        enter_stage(Stage::prune);
        break;
      case Stage::prune:
        if (round_in_stage_ < cfg_.prune_rounds) {
          if (cfg_.clustered())
            do_cluster_round(true);
          else
            do_oneshot_round();
          return true;
        }
        enter_stage(Stage::finetune);
        break;
      case Stage::finetune:
        do_finetune();
        enter_stage(Stage::done);
        return true;
      case Stage::done:
        return false;
    }
  }
}

void ExperimentDriver::enter_stage(Stage s) {
  stage_ = s;
  round_in_stage_ = 0;
  // Optimizer state carries within a phase only.
  if (s == Stage::stabilize || s == Stage::prune || s == Stage::finetune)
    for (auto& st : opt_states_) st.reset();
}

std::vector<int> ExperimentDriver::sample_clients() const {
  std::vector<int> order(clients_->size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(
      seed_mix({cfg_.seed, seed_tag::sample, static_cast<std::uint64_t>(global_round_)}));
  deterministic_shuffle(order, rng);
  order.resize(static_cast<std::size_t>(cfg_.clients_per_round));
  std::sort(order.begin(), order.end());
  return order;
}

void ExperimentDriver::log_traffic(std::span<const int> participants, const prune::Mask* mask,
                                   std::span<const std::uint64_t> uploads, bool mask_changed,
                                   double& mb) {
  const std::uint64_t total = net_->layout()->total_size();
  const std::uint64_t down = total - (mask ? mask->zero_count() : 0);
  const std::uint64_t aux =
      (mask_changed && cfg_.include_mask_bytes && mask) ? (mask->size() + 7) / 8 : 0;
  const std::size_t first = result_.traffic.size();
  for (std::size_t i = 0; i < participants.size(); ++i) {
    const int id = (*clients_)[static_cast<std::size_t>(participants[i])].client_id;
    result_.traffic.push_back({global_round_, id, metrics::Direction::down, down, aux});
    result_.traffic.push_back({global_round_, id, metrics::Direction::up, uploads[i], 0});
  }
  mb += metrics::comm_cost_mb(
      std::span<const metrics::Transmission>(result_.traffic).subspan(first));
}

void ExperimentDriver::do_warmup_round() {
  ++round_in_stage_;
  ++global_round_;
  std::vector<int> selected = sample_clients();
  TrainRound tr{global_round_, cfg_.seed, cfg_.local_epochs, cfg_.batch_size,
                cfg_.learning_rate, 0.0};
  std::vector<std::uint64_t> ups;
  global_params_ =
      fedavg_round(*net_, global_params_, *clients_, selected, opt_states_, tr, nullptr, &ups);
  double mb = 0;
  log_traffic(selected, nullptr, ups, false, mb);
  record_round("warmup", mb);
}

void ExperimentDriver::do_clustering() {
  const std::size_t n = clients_->size();
  if (cfg_.clustered()) {
    std::vector<cluster::UpdateDelta> deltas;
    deltas.reserve(n);
    for (const auto& client : *clients_) {
      cluster::ProbeConfig probe{cfg_.batch_size, cfg_.learning_rate,
                                 seed_mix({cfg_.seed, seed_tag::cluster_probe,
                                           static_cast<std::uint64_t>(client.client_id)})};
      deltas.push_back(cluster::compute_delta(*net_, global_params_, client, probe));
    }
    result_.distance_matrix = cluster::cosine_distance_matrix(deltas);
    result_.assignment = cluster::agglomerative_cluster(result_.distance_matrix,
                                                        static_cast<int>(n),
                                                        cfg_.effective_clusters());
    clusters_.clear();
    for (int k = 0; k < result_.assignment.num_clusters(); ++k) {
      ClusterState st;
      st.cluster_id = k;
      st.params = global_params_;
      st.mask = prune::Mask(net_->layout()->prunable_count(), true);
      st.reference = global_params_;  // frozen warm-up output (Phase-1 model)
      st.members = result_.assignment.members[static_cast<std::size_t>(k)];
      clusters_.push_back(std::move(st));
    }
  } else {
    result_.assignment.cluster_of.assign(n, 0);
    result_.assignment.members.assign(1, std::vector<int>(n));
    std::iota(result_.assignment.members[0].begin(), result_.assignment.members[0].end(), 0);
  }
}

void ExperimentDriver::maybe_mask_update() {
  const int r = round_in_stage_;  // 1-based within the pruning phase
  if (!cfg_.schedule.is_step_round(r)) return;
  TrainRound tr{global_round_, cfg_.seed, 1, cfg_.batch_size, cfg_.learning_rate, cfg_.lambda};
  for (auto& st : clusters_) {
    prune::ClusterSignals signals = scoring_probe(*net_, st, *clients_, tr);
    prune::StepReport rep;
    if (r == cfg_.schedule.first_step_round()) {
      // Entry step: jump to the starting sparsity in one importance-ranked cut.
      std::vector<double> scores = prune::importance(st.params, signals, cfg_.weights);
      prune::Mask next = prune::one_shot_prune(scores, cfg_.schedule.start_sparsity);
      rep.round = r;
      rep.sparsity_before = st.mask.sparsity();
      rep.sparsity_after = next.sparsity();
      rep.pruned = rep.deficit = next.zero_count();
      st.mask = std::move(next);
    } else {
      std::vector<double> scores = prune::importance(st.params, signals, cfg_.weights);
      std::vector<double> grow = prune::regrow_signal(signals, *net_->layout());
      rep = prune::prune_heal_step(st.mask, scores, grow, cfg_.schedule, r);
    }
    prune::apply_mask(st.params, st.mask);
    result_.prune_events.emplace_back(st.cluster_id, rep);
  }
}

void ExperimentDriver::do_cluster_round(bool pruned_phase) {
  ++round_in_stage_;
  ++global_round_;
  const bool use_mask = pruned_phase && cfg_.prunes();
  const std::size_t events_before = result_.prune_events.size();
  if (use_mask) maybe_mask_update();
  const bool mask_changed = result_.prune_events.size() != events_before;
  TrainRound tr{global_round_, cfg_.seed, cfg_.local_epochs, cfg_.batch_size,
                cfg_.learning_rate, cfg_.lambda};
  double mb = 0;
  for (auto& st : clusters_) {
    std::vector<std::uint64_t> ups;
    cluster_round(*net_, st, *clients_, opt_states_, tr, use_mask, &ups);
    log_traffic(st.members, use_mask ? &st.mask : nullptr, ups, mask_changed, mb);
  }
  record_round(pruned_phase ? "prune" : "stabilize", mb);
}

void ExperimentDriver::do_oneshot_round() {
  ++round_in_stage_;
  ++global_round_;
  const bool pruning_phase = stage_ == Stage::prune;
  bool mask_changed = false;
  if (pruning_phase && !oneshot_mask_applied_) {
    std::vector<double> scores = prune::magnitude_score(global_params_);
    global_mask_ = prune::one_shot_prune(scores, cfg_.schedule.target_sparsity);
    prune::apply_mask(global_params_, global_mask_);
    oneshot_mask_applied_ = true;
    mask_changed = true;
    prune::StepReport rep;
    rep.round = round_in_stage_;
    rep.sparsity_after = global_mask_.sparsity();
    rep.pruned = rep.deficit = global_mask_.zero_count();
    result_.prune_events.emplace_back(0, rep);
  }
  const prune::Mask* mask = oneshot_mask_applied_ ? &global_mask_ : nullptr;
  std::vector<int> selected = sample_clients();
  TrainRound tr{global_round_, cfg_.seed, cfg_.local_epochs, cfg_.batch_size,
                cfg_.learning_rate, 0.0};
  std::vector<std::uint64_t> ups;
  global_params_ =
      fedavg_round(*net_, global_params_, *clients_, selected, opt_states_, tr, mask, &ups);
  double mb = 0;
  log_traffic(selected, mask, ups, mask_changed, mb);
  record_round(pruning_phase ? "prune" : "stabilize", mb);
}

void ExperimentDriver::do_finetune() {
  const std::size_t n = clients_->size();
  result_.client_models.clear();
  result_.client_models.reserve(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    // Start from the training-phase model; client_models is still filling up,
    // so model_for_client must not be consulted here.
    nn::ParamSet model =
        clusters_.empty()
            ? global_params_
            : clusters_[static_cast<std::size_t>(result_.assignment.cluster_of[pos])].params;
    const prune::Mask* mask = nullptr;
    if (cfg_.prunes()) {
      if (cfg_.clustered())
        mask = &clusters_[static_cast<std::size_t>(
                              result_.assignment.cluster_of[pos])].mask;
      else if (oneshot_mask_applied_)
        mask = &global_mask_;
    }
    if (cfg_.finetune_epochs > 0) {
      const data::ClientDataset& client = (*clients_)[pos];
      LocalTrainOptions opts;
      opts.epochs = cfg_.finetune_epochs;
      opts.batch_size = cfg_.batch_size;
      opts.adam.learning_rate = cfg_.learning_rate;
      opts.mask = mask;
      opts.dropout = true;
      opts.seed = seed_mix({cfg_.seed, seed_tag::finetune,
                            static_cast<std::uint64_t>(client.client_id)});
      local_train(*net_, model, opt_states_[pos], client, opts);
    }
    result_.client_models.push_back(std::move(model));
  }

  metrics::RoundMetrics fm;
  fm.round = global_round_;
  fm.phase = "final";
  evaluate_population(fm.client_accuracy);
  double sum = 0;
  for (double a : fm.client_accuracy) sum += a;
  fm.mu = sum / static_cast<double>(fm.client_accuracy.size());
  fm.sigma = metrics::fairness(fm.client_accuracy);
  fm.round_mb = 0.0;  // fine-tuning is local only
  fm.cumulative_mb = cumulative_mb_;
  fm.mean_sparsity = mean_sparsity();
  result_.final_metrics = fm;
  result_.total_comm_mb = cumulative_mb_;
}

void ExperimentDriver::record_round(const std::string& phase, double round_mb) {
  cumulative_mb_ += round_mb;
  const bool last = global_round_ == cfg_.total_rounds();
  if (global_round_ % cfg_.eval_every != 0 && !last) return;
  metrics::RoundMetrics rm;
  rm.round = global_round_;
  rm.phase = phase;
  evaluate_population(rm.client_accuracy);
  double sum = 0;
  for (double a : rm.client_accuracy) sum += a;
  rm.mu = sum / static_cast<double>(rm.client_accuracy.size());
  rm.sigma = metrics::fairness(rm.client_accuracy);
  rm.round_mb = round_mb;
  rm.cumulative_mb = cumulative_mb_;
  rm.mean_sparsity = mean_sparsity();
  result_.rounds.push_back(std::move(rm));
}

void ExperimentDriver::evaluate_population(std::vector<double>& out) const {
  out.clear();
  out.reserve(clients_->size());
  for (std::size_t pos = 0; pos < clients_->size(); ++pos)
    out.push_back(evaluate_client(*net_, model_for_client(static_cast<int>(pos)),
                                  (*clients_)[pos]));
}

const nn::ParamSet& ExperimentDriver::model_for_client(int position) const {
  const auto pos = static_cast<std::size_t>(position);
  if (!result_.client_models.empty()) return result_.client_models[pos];
  if (!clusters_.empty())
    return clusters_[static_cast<std::size_t>(result_.assignment.cluster_of[pos])].params;
  return global_params_;
}

double ExperimentDriver::mean_sparsity() const {
  if (clusters_.empty()) return global_mask_.sparsity();
  double sum = 0;
  for (const auto& st : clusters_) sum += st.mask.sparsity();
  return sum / static_cast<double>(clusters_.size());
}

void ExperimentDriver::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  io::BinWriter w(os);
  w.u64(std::bit_cast<std::uint64_t>(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.str(cfg::kv_text(cfg::kv_from_config(cfg_)));
  w.u64(dataset_fingerprint(*clients_));

  w.u32(static_cast<std::uint32_t>(stage_));
  w.i32(round_in_stage_);
  w.i32(global_round_);
  w.u8(oneshot_mask_applied_ ? 1 : 0);
  w.f64(cumulative_mb_);

  w.vec_f64(global_params_.values);
  w.vec_u8(global_mask_.bits());

  w.u64(opt_states_.size());
  for (const auto& st : opt_states_) {
    w.vec_f64(st.m);
    w.vec_f64(st.v);
    w.i64(st.step);
  }

  w.u64(clusters_.size());
  for (const auto& st : clusters_) {
    w.i32(st.cluster_id);
    w.vec_f64(st.params.values);
    w.vec_u8(st.mask.bits());
    w.vec_f64(st.reference.values);
    w.vec_i32(st.members);
  }

  w.vec_i32(result_.assignment.cluster_of);
  w.u64(result_.assignment.members.size());
  for (const auto& m : result_.assignment.members) w.vec_i32(m);
  w.vec_f64(result_.distance_matrix);

  w.u64(result_.rounds.size());
  for (const auto& rm : result_.rounds) write_metrics(w, rm);
  write_metrics(w, result_.final_metrics);

  w.u64(result_.traffic.size());
  for (const auto& t : result_.traffic) {
    w.i32(t.round);
    w.i32(t.client);
    w.u8(static_cast<std::uint8_t>(t.direction));
    w.u64(t.nonzero_count);
    w.u64(t.aux_bytes);
  }

  w.u64(result_.prune_events.size());
  for (const auto& [cid, rep] : result_.prune_events) {
    w.i32(cid);
    w.i32(rep.round);
    w.f64(rep.sparsity_before);
    w.f64(rep.sparsity_after);
    w.u64(rep.churn);
    w.u64(rep.deficit);
    w.u64(rep.pruned);
    w.u64(rep.grown);
    w.u8(rep.degenerate ? 1 : 0);
  }

  w.u64(result_.client_models.size());
  for (const auto& m : result_.client_models) w.vec_f64(m.values);
  w.f64(result_.total_comm_mb);
}

std::unique_ptr<ExperimentDriver> ExperimentDriver::restore_checkpoint(
    const std::string& path, const std::vector<data::ClientDataset>* clients) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  io::BinReader r(is);
  if (r.u64() != std::bit_cast<std::uint64_t>(kCheckpointMagic))
    throw DataError("checkpoint: bad magic in " + path);
  if (r.u32() != kCheckpointVersion) throw DataError("checkpoint: unsupported version");

  if (!clients || clients->empty()) throw ConfigError("checkpoint: empty client population");
  std::unique_ptr<ExperimentDriver> d(new ExperimentDriver(clients));
  d->cfg_ = cfg::config_from_kv(cfg::parse_kv_text(r.str()));
  const data::ClientDataset& first = clients->front();
  d->cfg_.arch.timesteps = first.timesteps;
  d->cfg_.arch.channels = first.channels;
  d->cfg_.arch.num_classes = first.num_classes;
  d->cfg_.schedule.total_rounds = d->cfg_.prune_rounds;
  if (r.u64() != dataset_fingerprint(*clients))
    throw DataError("checkpoint: client data does not match the checkpointed run");
  d->net_ = std::make_unique<nn::Network>(d->cfg_.arch);
  const auto layout = d->net_->layout();

  d->stage_ = static_cast<Stage>(r.u32());
  d->round_in_stage_ = r.i32();
  d->global_round_ = r.i32();
  d->oneshot_mask_applied_ = r.u8() != 0;
  d->cumulative_mb_ = r.f64();

  d->global_params_ = nn::ParamSet{layout, r.vec_f64()};
  d->global_mask_ = prune::Mask::from_bits(r.vec_u8());

  d->opt_states_.resize(r.u64());
  for (auto& st : d->opt_states_) {
    st.m = r.vec_f64();
    st.v = r.vec_f64();
    st.step = r.i64();
  }
  if (d->opt_states_.size() != clients->size())
    throw DataError("checkpoint: optimizer state count mismatch");

  d->clusters_.resize(r.u64());
  for (auto& st : d->clusters_) {
    st.cluster_id = r.i32();
    st.params = nn::ParamSet{layout, r.vec_f64()};
    st.mask = prune::Mask::from_bits(r.vec_u8());
    st.reference = nn::ParamSet{layout, r.vec_f64()};
    st.members = r.vec_i32();
  }

  d->result_.assignment.cluster_of = r.vec_i32();
  d->result_.assignment.members.resize(r.u64());
  for (auto& m : d->result_.assignment.members) m = r.vec_i32();
  d->result_.distance_matrix = r.vec_f64();

  d->result_.rounds.resize(r.u64());
  for (auto& rm : d->result_.rounds) rm = read_metrics(r);
  d->result_.final_metrics = read_metrics(r);

  d->result_.traffic.resize(r.u64());
  for (auto& t : d->result_.traffic) {
    t.round = r.i32();
    t.client = r.i32();
    t.direction = static_cast<metrics::Direction>(r.u8());
    t.nonzero_count = r.u64();
    t.aux_bytes = r.u64();
  }

  d->result_.prune_events.resize(r.u64());
  for (auto& [cid, rep] : d->result_.prune_events) {
    cid = r.i32();
    rep.round = r.i32();
    rep.sparsity_before = r.f64();
    rep.sparsity_after = r.f64();
    rep.churn = r.u64();
    rep.deficit = r.u64();
    rep.pruned = r.u64();
    rep.grown = r.u64();
    rep.degenerate = r.u8() != 0;
  }

  d->result_.client_models.resize(r.u64());
  for (auto& m : d->result_.client_models) m = nn::ParamSet{layout, r.vec_f64()};
  d->result_.total_comm_mb = r.f64();

  if (d->global_params_.values.size() != layout->total_size())
    throw DataError("checkpoint: parameter size does not match the model");
  return d;
}

}  // namespace caafp::fed
