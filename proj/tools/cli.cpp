#include "cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "caafp/clustering.hpp"
#include "caafp/synth.hpp"
#include "caafp/ucihar.hpp"
#include "caafp/wisdm.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace caafp::cli {

namespace {

// The seven (alpha, beta, gamma) mixes of the scoring-weight ablation grid.
constexpr std::array<std::array<double, 3>, 7> kWeightGrid = {{
    {1.0, 0.0, 0.0},
    {0.0, 1.0, 0.0},
    {0.0, 0.0, 1.0},
    {0.50, 0.25, 0.25},
    {0.25, 0.50, 0.25},
    {0.25, 0.25, 0.50},
    {0.33, 0.33, 0.34},
}};

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Maps dedicated flags onto config keys; values stay strings so the config
// parser is the single source of validation.
class FlagMap {
 public:
  explicit FlagMap(CLI::App* app) : app_(app) {}

  void add(const std::string& flag, const std::string& key, const std::string& help) {
    entries_.push_back({flag, key, std::make_shared<std::string>()});
    app_->add_option(flag, *entries_.back().store, help);
  }

  void apply(cfg::KvMap& kv) const {
    for (const auto& e : entries_)
      if (app_->count(e.flag) > 0) kv[e.key] = *e.store;
  }

 private:
  struct Entry {
    std::string flag;
    std::string key;
    std::shared_ptr<std::string> store;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

void add_config_flags(CLI::App* sub, std::shared_ptr<FlagMap>& flags,
                      std::shared_ptr<std::string>& config_file,
                      std::shared_ptr<std::vector<std::string>>& sets) {
  config_file = std::make_shared<std::string>();
  sets = std::make_shared<std::vector<std::string>>();
  sub->add_option("--config", *config_file, "config file of key = value lines");
  sub->add_option("--set", *sets, "override any config key, e.g. --set train.lr=0.001")
      ->take_all();
  flags = std::make_shared<FlagMap>(sub);
  flags->add("--method", "method", "caafp | dense-clustered | oneshot-prune | global-ft");
  flags->add("--dataset", "dataset", "synth | wisdm | ucihar");
  flags->add("--path", "dataset.path", "dataset file (wisdm) or directory (ucihar)");
  flags->add("--scenario", "scenario", "standard | noisy | drift | noniid");
  flags->add("--noniid-k", "scenario.k", "classes kept per client in the noniid scenario");
  flags->add("--seed", "seed", "master seed");
  flags->add("--p1", "phases.warmup", "warm-up rounds");
  flags->add("--p2", "phases.stabilize", "post-clustering dense rounds");
  flags->add("--p3", "phases.prune", "pruned training rounds");
  flags->add("--p4", "phases.finetune", "local fine-tuning epochs");
  flags->add("--epochs", "train.epochs", "local epochs per round");
  flags->add("--batch", "train.batch", "minibatch size");
  flags->add("--lr", "train.lr", "Adam learning rate");
  flags->add("--lambda", "train.lambda", "proximal regularization strength");
  flags->add("--clusters", "clusters", "number of clusters K");
  flags->add("--clients-per-round", "clients_per_round", "sampled clients in global rounds");
  flags->add("--alpha", "score.alpha", "magnitude weight");
  flags->add("--beta", "score.beta", "coherence weight");
  flags->add("--gamma", "score.gamma", "consistency weight");
  flags->add("--s-start", "prune.start", "starting sparsity");
  flags->add("--s-target", "prune.target", "target sparsity");
  flags->add("--prune-freq", "prune.frequency", "rounds between mask updates");
  flags->add("--churn", "prune.churn", "churn rate rho");
  flags->add("--eval-every", "eval_every", "evaluate every n-th round");
  flags->add("--test-fraction", "test_fraction", "per-client test split fraction");
  flags->add("--standardize", "standardize", "true/false: z-score features from train stats");
  flags->add("--include-mask-bytes", "comm.mask_bytes",
             "true/false: count mask bitmaps in communication");
}

cfg::KvMap resolve_kv(const std::string& config_file, const std::vector<std::string>& sets,
                      const FlagMap& flags) {
  cfg::KvMap kv;
  if (!config_file.empty()) kv = cfg::parse_config_file(config_file);
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  flags.apply(kv);
  return kv;
}

std::vector<data::ClientDataset> load_raw(const fed::ExperimentConfig& cfg) {
  if (cfg.dataset == "synth") return data::synth_population(cfg.synth).clients;
  if (cfg.dataset_path.empty())
    throw DataError("dataset '" + cfg.dataset + "' needs dataset.path (--path)");
  if (cfg.dataset == "wisdm") return data::load_wisdm(cfg.dataset_path);
  return data::load_ucihar(cfg.dataset_path);
}

std::vector<data::ClientDataset> prepare_clients(std::vector<data::ClientDataset> raw,
                                                 const fed::ExperimentConfig& cfg) {
  std::vector<data::ClientDataset> out;
  out.reserve(raw.size());
  for (auto& ds : raw)
    out.push_back(data::split_client(
        ds, cfg.test_fraction,
        seed_mix({cfg.seed, seed_tag::split, static_cast<std::uint64_t>(ds.client_id)})));
  out = data::apply_scenario(std::move(out), cfg.scenario);
  if (cfg.standardize)
    for (auto& ds : out) data::standardize_client(ds);
  return out;
}

std::string run_stem(const fed::ExperimentConfig& cfg) {
  return fed::method_name(cfg.method) + "_" + cfg.dataset + "_" + scenario_label(cfg) + "_s" +
         std::to_string(cfg.seed) + "_" + cfg::config_hash(cfg).substr(0, 8);
}

json config_json(const fed::ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg::kv_from_config(cfg)) j[k] = v;
  return j;
}

json final_json(const fed::RunResult& res) {
  return json{{"mu", res.final_metrics.mu},
              {"sigma", res.final_metrics.sigma},
              {"mean_sparsity", res.final_metrics.mean_sparsity},
              {"comm_mb", res.total_comm_mb},
              {"rounds", res.rounds.empty() ? 0 : res.rounds.back().round}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void write_run_outputs(const fed::ExperimentConfig& cfg, const fed::RunResult& res,
                       const std::vector<data::ClientDataset>& clients, const fs::path& out_dir,
                       bool dump_clustering, bool prune_log) {
  fs::create_directories(out_dir);
  const std::string stem = run_stem(cfg);
  const metrics::RunMeta meta{fed::method_name(cfg.method), cfg.dataset, scenario_label(cfg),
                              cfg.seed};

  {
    std::ostringstream os;
    metrics::write_rounds_csv(os, meta, res.rounds, res.final_metrics);
    write_text(out_dir / (stem + "_rounds.csv"), os.str());
  }
  {
    std::ostringstream os;
    const metrics::ResultRow row = result_row(cfg, res);
    metrics::write_results_csv(os, std::span<const metrics::ResultRow>(&row, 1));
    write_text(out_dir / (stem + "_result.csv"), os.str());
  }
  {
    json manifest;
    manifest["config"] = config_json(cfg);
    manifest["config_hash"] = cfg::config_hash(cfg);
    std::size_t train = 0, test = 0;
    for (const auto& c : clients) {
      train += c.train_count();
      test += c.test_count();
    }
    manifest["population"] = {{"clients", clients.size()},
                              {"train_samples", train},
                              {"test_samples", test}};
    std::vector<std::size_t> sizes;
    for (const auto& m : res.assignment.members) sizes.push_back(m.size());
    manifest["clustering"] = {{"clusters", res.assignment.num_clusters()}, {"sizes", sizes}};
    manifest["final"] = final_json(res);
    write_text(out_dir / (stem + "_manifest.json"), manifest.dump(2) + "\n");
  }
  if (dump_clustering && !res.distance_matrix.empty()) {
    std::vector<int> ids;
    for (const auto& c : clients) ids.push_back(c.client_id);
    cluster::write_distance_csv(res.distance_matrix, static_cast<int>(clients.size()),
                                (out_dir / (stem + "_distance.csv")).string());
    cluster::write_assignment_csv(res.assignment, ids,
                                  (out_dir / (stem + "_assignment.csv")).string());
  }
  if (prune_log) {
    json steps = json::array();
    for (const auto& [cid, rep] : res.prune_events)
      steps.push_back({{"cluster", cid},
                       {"round", rep.round},
                       {"sparsity_before", rep.sparsity_before},
                       {"sparsity_after", rep.sparsity_after},
                       {"churn", rep.churn},
                       {"deficit", rep.deficit},
                       {"pruned", rep.pruned},
                       {"grown", rep.grown},
                       {"degenerate", rep.degenerate}});
    write_text(out_dir / (stem + "_prune.json"), steps.dump(2) + "\n");
  }
}

struct RunOpts {
  std::shared_ptr<std::string> config_file;
  std::shared_ptr<std::vector<std::string>> sets;
  std::shared_ptr<FlagMap> flags;
  std::string out_dir = "out";
  std::string checkpoint;
  int checkpoint_at = 0;
  std::string resume;
  bool dump_clustering = false;
  bool prune_log = false;
};

int do_run(const RunOpts& o) {
  std::unique_ptr<fed::ExperimentDriver> driver;
  fed::ExperimentConfig cfg;
  std::vector<data::ClientDataset> clients;
  if (!o.resume.empty()) {
    // The checkpoint carries the resolved config; rebuild the same clients.
    std::ifstream peek(o.resume, std::ios::binary);
    if (!peek) throw IoError("cannot open checkpoint " + o.resume);
    cfg = cfg::config_from_kv(resolve_kv(*o.config_file, *o.sets, *o.flags));
    clients = load_clients(cfg);
    driver = fed::ExperimentDriver::restore_checkpoint(o.resume, &clients);
    cfg = driver->config();
  } else {
    cfg = cfg::config_from_kv(resolve_kv(*o.config_file, *o.sets, *o.flags));
    clients = load_clients(cfg);
    driver = std::make_unique<fed::ExperimentDriver>(cfg, &clients);
  }

  bool saved_mid = false;
  while (driver->step()) {
    if (!o.checkpoint.empty() && o.checkpoint_at > 0 && !saved_mid &&
        driver->global_round() >= o.checkpoint_at) {
      driver->save_checkpoint(o.checkpoint);
      saved_mid = true;
    }
  }
  if (!o.checkpoint.empty() && !saved_mid) driver->save_checkpoint(o.checkpoint);

  const fed::RunResult& res = driver->result();
  write_run_outputs(driver->config(), res, clients, o.out_dir, o.dump_clustering, o.prune_log);
  std::printf("%s final: mu=%.4f sigma=%.4f sparsity=%.3f comm_mb=%.2f\n",
              run_stem(driver->config()).c_str(), res.final_metrics.mu, res.final_metrics.sigma,
              res.final_metrics.mean_sparsity, res.total_comm_mb);
  return 0;
}

struct SweepOpts {
  std::shared_ptr<std::string> config_file;
  std::shared_ptr<std::vector<std::string>> sets;
  std::shared_ptr<FlagMap> flags;
  std::string out_dir = "out";
  std::string seeds;         // comma list; empty = base seed
  std::string weights_grid;  // "table3"
  std::string phases_grid;   // "p1,p2;p1,p2;..."
  std::string start_grid;    // comma list of S_start values
  std::string methods;       // comma list; empty = base method
};

int do_sweep(const SweepOpts& o) {
  const cfg::KvMap base = resolve_kv(*o.config_file, *o.sets, *o.flags);

  std::vector<std::string> seeds = split_list(o.seeds, ',');
  if (seeds.empty()) seeds.push_back("");  // keep the base seed
  std::vector<std::string> methods = split_list(o.methods, ',');
  if (methods.empty()) methods.push_back("");

  std::vector<std::array<std::string, 3>> weight_sets;
  std::vector<std::string> scenarios;
  if (o.weights_grid == "table3") {
    for (const auto& w : kWeightGrid)
      weight_sets.push_back({metrics::format_double(w[0]), metrics::format_double(w[1]),
                             metrics::format_double(w[2])});
    scenarios = {"standard", "noisy", "drift"};
  } else if (o.weights_grid.empty()) {
    weight_sets.push_back({"", "", ""});
    scenarios = {""};
  } else {
    throw ConfigError("unknown --weights-grid '" + o.weights_grid + "' (try table3)");
  }

  std::vector<std::array<std::string, 2>> phase_sets;
  for (const std::string& p : split_list(o.phases_grid, ';')) {
    auto parts = split_list(p, ',');
    if (parts.size() != 2) throw ConfigError("--phases-grid expects p1,p2 pairs");
    phase_sets.push_back({parts[0], parts[1]});
  }
  if (phase_sets.empty()) phase_sets.push_back({"", ""});

  std::vector<std::string> starts = split_list(o.start_grid, ',');
  if (starts.empty()) starts.push_back("");

  // Raw populations are reloaded only when the dataset inputs change.
  std::string raw_key;
  std::vector<data::ClientDataset> raw;

  std::vector<metrics::ResultRow> rows;
  json manifest_runs = json::array();
  fs::create_directories(o.out_dir);

  for (const std::string& method : methods)
    for (const std::string& scen : scenarios)
      for (const auto& w : weight_sets)
        for (const auto& ph : phase_sets)
          for (const std::string& st : starts)
            for (const std::string& seed : seeds) {
              cfg::KvMap kv = base;
              if (!method.empty()) kv["method"] = method;
              if (!scen.empty()) kv["scenario"] = scen;
              if (!w[0].empty()) {
                kv["score.alpha"] = w[0];
                kv["score.beta"] = w[1];
                kv["score.gamma"] = w[2];
              }
              if (!ph[0].empty()) {
                kv["phases.warmup"] = ph[0];
                kv["phases.stabilize"] = ph[1];
              }
              if (!st.empty()) kv["prune.start"] = st;
              if (!seed.empty()) kv["seed"] = seed;
              kv.erase("scenario.seed");  // rederive from the run seed
              kv.erase("synth.seed");
              const fed::ExperimentConfig cfg = cfg::config_from_kv(kv);

              const std::string key = cfg.dataset + "|" + cfg.dataset_path + "|" +
                                      (cfg.dataset == "synth"
                                           ? std::to_string(cfg.synth.seed)
                                           : "");
              if (key != raw_key) {
                raw = load_raw(cfg);
                raw_key = key;
              }
              std::vector<data::ClientDataset> clients = prepare_clients(raw, cfg);
              fed::ExperimentDriver driver(cfg, &clients);
              driver.run_to_completion();
              const fed::RunResult& res = driver.result();
              write_run_outputs(driver.config(), res, clients, o.out_dir, false, false);
              rows.push_back(result_row(driver.config(), res));
              json entry = final_json(res);
              entry["stem"] = run_stem(driver.config());
              entry["config_hash"] = cfg::config_hash(driver.config());
              entry["seed"] = driver.config().seed;
              manifest_runs.push_back(entry);
              std::printf("sweep %s: mu=%.4f sigma=%.4f\n",
                          run_stem(driver.config()).c_str(), res.final_metrics.mu,
                          res.final_metrics.sigma);
            }

  {
    std::ostringstream os;
    metrics::write_results_csv(os, rows);
    write_text(fs::path(o.out_dir) / "sweep_results.csv", os.str());
  }
  json manifest;
  manifest["base_config"] = [&] {
    json j = json::object();
    for (const auto& [k, v] : base) j[k] = v;
    return j;
  }();
  manifest["rows"] = rows.size();
  manifest["runs"] = manifest_runs;
  write_text(fs::path(o.out_dir) / "sweep_manifest.json", manifest.dump(2) + "\n");
  std::printf("sweep: %zu rows -> %s/sweep_results.csv\n", rows.size(), o.out_dir.c_str());
  return 0;
}

std::vector<metrics::ResultRow> read_rows_from(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(is, header)) throw DataError(path.string() + ": empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  is.seekg(0);
  if (header == metrics::kResultsCsvHeader) return metrics::read_results_csv(is, path.string());
  if (header == metrics::kRoundsCsvHeader)
    return metrics::read_rounds_summary_csv(is, path.string());
  throw DataError(path.string() + ": unrecognized CSV header");
}

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string out_csv;
};

int do_report(const ReportOpts& o) {
  std::vector<metrics::ResultRow> rows;
  for (const std::string& in : o.inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) {
      // result CSVs are authoritative; rounds/assignment/distance files would
      // double-count or fail to parse, so a directory scan takes results only
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string name = e.path().filename().string();
        if (name.ends_with("_result.csv") || name.ends_with("results.csv"))
          files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        auto r = read_rows_from(f);
        rows.insert(rows.end(), r.begin(), r.end());
      }
    } else {
      auto r = read_rows_from(p);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  if (rows.empty()) throw DataError("report: no result rows found");

  int duplicates = 0;
  std::vector<ReportGroup> groups = aggregate_rows(std::move(rows), &duplicates);
  if (duplicates > 0)
    std::fprintf(stderr, "warning: %d duplicate (method, seed, config) rows collapsed\n",
                 duplicates);

  std::printf("%-16s %-8s %-10s %-14s %5s  %-15s %-15s %10s %9s %9s\n", "method", "dataset",
              "scenario", "a/b/g", "seeds", "mu", "sigma", "comm_mb", "sparsity", "score");
  for (const auto& g : groups) {
    char mu[32], sg[32], abg[32];
    std::snprintf(mu, sizeof mu, "%.4f±%.4f", g.mu_mean, g.mu_std);
    std::snprintf(sg, sizeof sg, "%.4f±%.4f", g.sigma_mean, g.sigma_std);
    std::snprintf(abg, sizeof abg, "%.2f/%.2f/%.2f", g.key.alpha, g.key.beta, g.key.gamma);
    std::printf("%-16s %-8s %-10s %-14s %5d  %-15s %-15s %10.2f %9.3f %9.4f\n",
                g.key.method.c_str(), g.key.dataset.c_str(), g.key.scenario.c_str(), abg, g.runs,
                mu, sg, g.comm_mean, g.sparsity_mean, g.score);
  }

  if (!o.out_csv.empty()) {
    std::ostringstream os;
    os << "method,dataset,scenario,config_hash,seeds,mu_mean,mu_std,sigma_mean,sigma_std,"
          "comm_mb_mean,final_sparsity_mean,score\n";
    for (const auto& g : groups) {
      os << g.key.method << ',' << g.key.dataset << ',' << g.key.scenario << ','
         << g.key.config_hash << ',' << g.runs << ',' << metrics::format_double(g.mu_mean) << ','
         << metrics::format_double(g.mu_std) << ',' << metrics::format_double(g.sigma_mean) << ','
         << metrics::format_double(g.sigma_std) << ',' << metrics::format_double(g.comm_mean)
         << ',' << metrics::format_double(g.sparsity_mean) << ','
         << metrics::format_double(g.score) << '\n';
    }
    write_text(o.out_csv, os.str());
  }
  return 0;
}

struct ValidateOpts {
  std::shared_ptr<std::string> config_file;
  std::shared_ptr<std::vector<std::string>> sets;
  std::shared_ptr<FlagMap> flags;
};

int do_validate(const ValidateOpts& o) {
  const fed::ExperimentConfig cfg = cfg::config_from_kv(resolve_kv(*o.config_file, *o.sets,
                                                                   *o.flags));
  std::vector<data::ClientDataset> raw;
  if (cfg.dataset == "wisdm") {
    if (cfg.dataset_path.empty()) throw DataError("wisdm needs --path");
    data::WisdmLoadReport rep;
    raw = data::load_wisdm(cfg.dataset_path, &rep);
    std::printf("wisdm: %zu lines parsed, %zu malformed skipped, %zu windows, %zu users dropped\n",
                rep.parsed_lines, rep.malformed_lines, rep.total_windows,
                rep.dropped_users.size());
  } else if (cfg.dataset == "ucihar") {
    if (cfg.dataset_path.empty()) throw DataError("ucihar needs --path");
    raw = data::load_ucihar(cfg.dataset_path);
  } else {
    raw = data::synth_population(cfg.synth).clients;
  }
  for (const auto& c : raw) c.validate();

  std::size_t total = 0;
  std::vector<std::size_t> per_class;
  for (const auto& c : raw) {
    total += c.train_count() + c.test_count();
    for (int y : c.train_y) {
      if (per_class.size() <= static_cast<std::size_t>(y))
        per_class.resize(static_cast<std::size_t>(y) + 1, 0);
      ++per_class[static_cast<std::size_t>(y)];
    }
  }
  std::printf("%s: %zu clients, %zu samples, shape %dx%d, %d classes\n", cfg.dataset.c_str(),
              raw.size(), total, raw.front().timesteps, raw.front().channels,
              raw.front().num_classes);
  for (std::size_t y = 0; y < per_class.size(); ++y)
    std::printf("  class %zu: %zu samples\n", y, per_class[y]);

  const data::HeterogeneityReport h = data::heterogeneity_report(raw);
  std::printf("heterogeneity: count CV %.1f%%, %d/%d clients missing classes, feature CV %.1f%%\n",
              h.count_cv_pct, h.clients_missing_classes, h.client_total, h.mean_feature_cv_pct);

  std::vector<data::ClientDataset> prepared = prepare_clients(raw, cfg);
  for (const auto& c : prepared) c.validate();
  std::printf("scenario '%s': %zu clients ready (test fraction %.2f)\n",
              scenario_label(cfg).c_str(), prepared.size(), cfg.test_fraction);
  return 0;
}

}  // namespace

std::vector<data::ClientDataset> load_clients(const fed::ExperimentConfig& cfg) {
  return prepare_clients(load_raw(cfg), cfg);
}

std::string scenario_label(const fed::ExperimentConfig& cfg) {
  std::string name = data::scenario_name(cfg.scenario.kind);
  if (cfg.scenario.kind == data::ScenarioKind::non_iid_k)
    name += "-k" + std::to_string(cfg.scenario.classes_per_client);
  return name;
}

metrics::ResultRow result_row(const fed::ExperimentConfig& cfg, const fed::RunResult& res) {
  metrics::ResultRow row;
  row.method = fed::method_name(cfg.method);
  row.dataset = cfg.dataset;
  row.scenario = scenario_label(cfg);
  row.seed = cfg.seed;
  row.alpha = cfg.weights.alpha;
  row.beta = cfg.weights.beta;
  row.gamma = cfg.weights.gamma;
  row.start_sparsity = cfg.schedule.start_sparsity;
  row.target_sparsity = cfg.schedule.target_sparsity;
  row.finetune_epochs = cfg.finetune_epochs;
  row.final_sparsity = res.final_metrics.mean_sparsity;
  row.mu = res.final_metrics.mu;
  row.sigma = res.final_metrics.sigma;
  row.comm_mb = res.total_comm_mb;
  row.config_hash = cfg::config_hash(cfg);
  return row;
}

std::vector<ReportGroup> aggregate_rows(std::vector<metrics::ResultRow> rows, int* duplicates) {
  auto ident = [](const metrics::ResultRow& r) {
    return std::tuple(r.config_hash, r.method, r.dataset, r.scenario, r.seed);
  };
  std::sort(rows.begin(), rows.end(),
            [&](const auto& a, const auto& b) { return ident(a) < ident(b); });
  int dups = 0;
  std::vector<metrics::ResultRow> unique_rows;
  unique_rows.reserve(rows.size());
  for (auto& r : rows) {
    if (!unique_rows.empty()) {
      const auto& p = unique_rows.back();
      if (p.config_hash == r.config_hash && p.method == r.method && p.seed == r.seed) {
        ++dups;
        continue;
      }
    }
    unique_rows.push_back(std::move(r));
  }
  rows = std::move(unique_rows);
  if (duplicates) *duplicates = dups;

  std::vector<ReportGroup> out;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].config_hash == rows[i].config_hash &&
           rows[j].method == rows[i].method && rows[j].dataset == rows[i].dataset &&
           rows[j].scenario == rows[i].scenario)
      ++j;
    ReportGroup g;
    g.key = rows[i];
    g.runs = static_cast<int>(j - i);
    std::vector<double> mus, sigmas;
    for (std::size_t k = i; k < j; ++k) {
      mus.push_back(rows[k].mu);
      sigmas.push_back(rows[k].sigma);
      g.comm_mean += rows[k].comm_mb;
      g.sparsity_mean += rows[k].final_sparsity;
    }
    auto mean_of = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    g.mu_mean = mean_of(mus);
    g.sigma_mean = mean_of(sigmas);
    g.mu_std = metrics::fairness(mus);
    g.sigma_std = metrics::fairness(sigmas);
    g.comm_mean /= static_cast<double>(g.runs);
    g.sparsity_mean /= static_cast<double>(g.runs);
    g.score = metrics::score_ratio(g.mu_mean, g.sigma_mean);
    out.push_back(std::move(g));
    i = j;
  }
  return out;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"cluster-aware adaptive federated pruning simulator"};
  app.require_subcommand(1);

  RunOpts run_opts;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_config_flags(run, run_opts.flags, run_opts.config_file, run_opts.sets);
  run->add_option("--out", run_opts.out_dir, "output directory");
  run->add_option("--checkpoint", run_opts.checkpoint, "write driver state to this file");
  run->add_option("--checkpoint-at", run_opts.checkpoint_at,
                  "save the checkpoint once this global round completes (0 = at the end)");
  run->add_option("--resume", run_opts.resume, "restore driver state and continue");
  run->add_flag("--dump-clustering", run_opts.dump_clustering,
                "write distance matrix and assignment CSVs");
  run->add_flag("--prune-log", run_opts.prune_log, "write mask-evolution steps as JSON");

  SweepOpts sweep_opts;
  CLI::App* sweep = app.add_subcommand("sweep", "grid of experiments into one results CSV");
  add_config_flags(sweep, sweep_opts.flags, sweep_opts.config_file, sweep_opts.sets);
  sweep->add_option("--out", sweep_opts.out_dir, "output directory");
  sweep->add_option("--seeds", sweep_opts.seeds, "comma-separated master seeds");
  sweep->add_option("--weights-grid", sweep_opts.weights_grid,
                    "table3: 7 scoring-weight mixes x standard/noisy/drift");
  sweep->add_option("--phases-grid", sweep_opts.phases_grid,
                    "semicolon-separated p1,p2 pairs, e.g. 0,0;5,5;10,10");
  sweep->add_option("--start-grid", sweep_opts.start_grid,
                    "comma-separated starting sparsities");
  sweep->add_option("--methods", sweep_opts.methods, "comma-separated methods to compare");

  ReportOpts report_opts;
  CLI::App* report = app.add_subcommand("report", "aggregate result CSVs over seeds");
  report->add_option("inputs", report_opts.inputs, "result CSV files or directories")
      ->required();
  report->add_option("--out", report_opts.out_csv, "also write the aggregate table as CSV");

  ValidateOpts validate_opts;
  CLI::App* validate = app.add_subcommand("validate-data", "ingestion and scenario checks");
  add_config_flags(validate, validate_opts.flags, validate_opts.config_file, validate_opts.sets);

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "run the built-in reference checks");

  int rc = 0;
  run->callback([&] { rc = do_run(run_opts); });
  sweep->callback([&] { rc = do_sweep(sweep_opts); });
  report->callback([&] { rc = do_report(report_opts); });
  validate->callback([&] { rc = do_validate(validate_opts); });
  oracle_cmd->callback([&] { rc = oracle::run_all(std::cout); });

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}

}  // namespace caafp::cli
