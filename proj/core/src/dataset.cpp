#include "caafp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "caafp/binio.hpp"

namespace caafp::data {

namespace {
constexpr char kPopulationMagic[8] = {'C', 'A', 'F', 'P', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kPopulationVersion = 1;
}  // namespace

void ClientDataset::validate() const {
  if (timesteps < 1 || channels < 1 || num_classes < 1)
    throw DataError("client dataset: bad shape metadata");
  if (train_x.size() != train_count() * sample_size() ||
      test_x.size() != test_count() * sample_size())
    throw DataError("client dataset: feature buffer does not match label count");
  if (train_count() == 0) throw DataError("client dataset: empty train split");
  for (int y : train_y)
    if (y < 0 || y >= num_classes) throw DataError("client dataset: train label out of range");
  for (int y : test_y)
    if (y < 0 || y >= num_classes) throw DataError("client dataset: test label out of range");
}

void ScenarioSpec::validate() const {
  if (client_fraction < 0.0 || client_fraction > 1.0)
    throw ConfigError("scenario: client fraction must be in [0,1]");
  if (label_noise_rate < 0.0 || label_noise_rate > 1.0)
    throw ConfigError("scenario: label noise rate must be in [0,1]");
  if (kind == ScenarioKind::non_iid_k && classes_per_client < 1)
    throw ConfigError("scenario: classes per client must be >= 1");
}

ScenarioKind scenario_kind_from_name(const std::string& name) {
  if (name == "standard") return ScenarioKind::standard;
  if (name == "noisy") return ScenarioKind::noisy_clients;
  if (name == "drift") return ScenarioKind::drift;
  if (name == "noniid") return ScenarioKind::non_iid_k;
  throw ConfigError("unknown scenario '" + name + "' (standard|noisy|drift|noniid)");
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::standard: return "standard";
    case ScenarioKind::noisy_clients: return "noisy";
    case ScenarioKind::drift: return "drift";
    case ScenarioKind::non_iid_k: return "noniid";
  }
  return "standard";
}

ClientDataset split_client(const ClientDataset& ds, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("split_client: test fraction must be in [0,1)");
  if (!ds.test_y.empty()) throw ConfigError("split_client: dataset already split");
  if (ds.train_y.empty()) throw DataError("split_client: no samples to split");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.train_y.size(); ++i) by_class[ds.train_y[i]].push_back(i);

  std::vector<std::size_t> test_idx;
  Rng rng = make_rng(seed_mix({seed, seed_tag::split, static_cast<std::uint64_t>(ds.client_id)}));
  for (auto& [label, idx] : by_class) {
    deterministic_shuffle(idx, rng);
    auto want = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    want = std::min(want, idx.size() - 1);  // keep at least one train sample per class
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + want);
  }
  std::sort(test_idx.begin(), test_idx.end());

  ClientDataset out;
  out.client_id = ds.client_id;
  out.timesteps = ds.timesteps;
  out.channels = ds.channels;
  out.num_classes = ds.num_classes;
  const std::size_t ss = ds.sample_size();
  std::size_t next_test = 0;
  for (std::size_t i = 0; i < ds.train_y.size(); ++i) {
    const bool is_test = next_test < test_idx.size() && test_idx[next_test] == i;
    if (is_test) ++next_test;
    auto& xs = is_test ? out.test_x : out.train_x;
    auto& ys = is_test ? out.test_y : out.train_y;
    xs.insert(xs.end(), ds.train_sample(i), ds.train_sample(i) + ss);
    ys.push_back(ds.train_y[i]);
  }
  out.validate();
  return out;
}

namespace {

void corrupt_labels(ClientDataset& ds, double rate, Rng& rng) {
  const std::size_t n = ds.train_count();
  auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  deterministic_shuffle(idx, rng);
  for (std::size_t i = 0; i < count; ++i)
    ds.train_y[idx[i]] = static_cast<int>(bounded(rng, static_cast<std::size_t>(ds.num_classes)));
}

void restrict_classes(ClientDataset& ds, int k, Rng& rng) {
  std::set<int> label_set(ds.train_y.begin(), ds.train_y.end());
  std::vector<int> labels(label_set.begin(), label_set.end());
  if (static_cast<int>(labels.size()) <= k) return;
  deterministic_shuffle(labels, rng);
  labels.resize(static_cast<std::size_t>(k));
  std::set<int> allowed(labels.begin(), labels.end());

  auto filter = [&](std::vector<double>& xs, std::vector<int>& ys) {
    const std::size_t ss = ds.sample_size();
    std::vector<double> fx;
    std::vector<int> fy;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (!allowed.count(ys[i])) continue;
      fx.insert(fx.end(), xs.begin() + i * ss, xs.begin() + (i + 1) * ss);
      fy.push_back(ys[i]);
    }
    xs = std::move(fx);
    ys = std::move(fy);
  };
  filter(ds.train_x, ds.train_y);
  filter(ds.test_x, ds.test_y);
}

}  // namespace

std::vector<ClientDataset> apply_scenario(std::vector<ClientDataset> clients,
                                          const ScenarioSpec& spec) {
  spec.validate();
  if (spec.kind == ScenarioKind::standard) return clients;

  const std::size_t n = clients.size();
  Rng select_rng = make_rng(seed_mix({spec.seed, seed_tag::scenario, 0}));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  deterministic_shuffle(order, select_rng);

  if (spec.kind == ScenarioKind::non_iid_k) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = make_rng(seed_mix({spec.seed, seed_tag::scenario, 1,
                                   static_cast<std::uint64_t>(clients[i].client_id)}));
      restrict_classes(clients[i], spec.classes_per_client, rng);
      if (clients[i].train_y.empty())
        throw DataError("apply_scenario: class restriction emptied a train split");
    }
    return clients;
  }

  const auto affected =
      static_cast<std::size_t>(std::floor(spec.client_fraction * static_cast<double>(n)));
  const double rate = spec.kind == ScenarioKind::drift ? 1.0 : spec.label_noise_rate;
  for (std::size_t i = 0; i < affected; ++i) {
    ClientDataset& ds = clients[order[i]];
    Rng rng = make_rng(seed_mix({spec.seed, seed_tag::scenario, 2,
                                 static_cast<std::uint64_t>(ds.client_id)}));
    corrupt_labels(ds, rate, rng);
  }
  return clients;
}

void standardize_client(ClientDataset& ds) {
  const int ch = ds.channels;
  const std::size_t n = ds.train_count();
  if (n == 0) throw DataError("standardize_client: empty train split");
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  const std::size_t per_ch = n * static_cast<std::size_t>(ds.timesteps);
  for (std::size_t i = 0; i < ds.train_x.size(); ++i) mean[i % ch] += ds.train_x[i];
  for (int c = 0; c < ch; ++c) mean[c] /= static_cast<double>(per_ch);
  for (std::size_t i = 0; i < ds.train_x.size(); ++i) {
    const double d = ds.train_x[i] - mean[i % ch];
    var[i % ch] += d * d;
  }
  std::vector<double> scale(ch);
  for (int c = 0; c < ch; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(per_ch));
    scale[c] = sd > 1e-12 ? 1.0 / sd : 1.0;  // constant channels pass through centered
  }
  for (std::size_t i = 0; i < ds.train_x.size(); ++i)
    ds.train_x[i] = (ds.train_x[i] - mean[i % ch]) * scale[i % ch];
  for (std::size_t i = 0; i < ds.test_x.size(); ++i)
    ds.test_x[i] = (ds.test_x[i] - mean[i % ch]) * scale[i % ch];
}

HeterogeneityReport heterogeneity_report(const std::vector<ClientDataset>& clients) {
  if (clients.empty()) throw DataError("heterogeneity_report: no clients");
  HeterogeneityReport r;
  r.client_total = static_cast<int>(clients.size());

  std::set<int> global_classes;
  for (const auto& c : clients) {
    for (int y : c.train_y) global_classes.insert(y);
    for (int y : c.test_y) global_classes.insert(y);
  }

  double sum = 0.0, sq = 0.0;
  for (const auto& c : clients) {
    const double n = static_cast<double>(c.train_count() + c.test_count());
    sum += n;
    sq += n * n;
  }
  const double nc = static_cast<double>(clients.size());
  r.mean_count = sum / nc;
  r.std_count = std::sqrt(std::max(0.0, sq / nc - r.mean_count * r.mean_count));
  r.count_cv_pct = r.mean_count > 0.0 ? 100.0 * r.std_count / r.mean_count : 0.0;

  for (const auto& c : clients) {
    std::set<int> mine(c.train_y.begin(), c.train_y.end());
    mine.insert(c.test_y.begin(), c.test_y.end());
    if (mine.size() < global_classes.size()) ++r.clients_missing_classes;
  }

  // CV of per-client channel means, averaged over channels.
  const int ch = clients.front().channels;
  double cv_sum = 0.0;
  int cv_channels = 0;
  for (int c = 0; c < ch; ++c) {
    double msum = 0.0, msq = 0.0;
    for (const auto& cl : clients) {
      double acc = 0.0;
      std::size_t cnt = 0;
      for (std::size_t i = static_cast<std::size_t>(c); i < cl.train_x.size();
           i += static_cast<std::size_t>(ch)) {
        acc += cl.train_x[i];
        ++cnt;
      }
      for (std::size_t i = static_cast<std::size_t>(c); i < cl.test_x.size();
           i += static_cast<std::size_t>(ch)) {
        acc += cl.test_x[i];
        ++cnt;
      }
      const double m = cnt ? acc / static_cast<double>(cnt) : 0.0;
      msum += m;
      msq += m * m;
    }
    const double mean = msum / nc;
    const double sd = std::sqrt(std::max(0.0, msq / nc - mean * mean));
    if (std::abs(mean) > 1e-12) {
      cv_sum += 100.0 * sd / std::abs(mean);
      ++cv_channels;
    }
  }
  r.mean_feature_cv_pct = cv_channels ? cv_sum / cv_channels : 0.0;
  return r;
}

void save_population(const std::vector<ClientDataset>& clients,
                     const std::vector<int>& true_cluster, const std::string& path) {
  if (!true_cluster.empty() && true_cluster.size() != clients.size())
    throw ConfigError("save_population: cluster label count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  io::BinWriter w(os);
  w.u64(std::bit_cast<std::uint64_t>(kPopulationMagic));
  w.u32(kPopulationVersion);
  w.u32(static_cast<std::uint32_t>(clients.size()));
  w.vec_i32(true_cluster);
  for (const auto& c : clients) {
    w.i32(c.client_id);
    w.i32(c.timesteps);
    w.i32(c.channels);
    w.i32(c.num_classes);
    w.vec_f64(c.train_x);
    w.vec_i32(c.train_y);
    w.vec_f64(c.test_x);
    w.vec_i32(c.test_y);
  }
}

LoadedPopulation load_population(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  io::BinReader r(is);
  if (r.u64() != std::bit_cast<std::uint64_t>(kPopulationMagic))
    throw DataError("population file: bad magic");
  if (r.u32() != kPopulationVersion) throw DataError("population file: unsupported version");
  const std::uint32_t n = r.u32();
  LoadedPopulation out;
  out.true_cluster = r.vec_i32();
  out.clients.resize(n);
  for (auto& c : out.clients) {
    c.client_id = r.i32();
    c.timesteps = r.i32();
    c.channels = r.i32();
    c.num_classes = r.i32();
    c.train_x = r.vec_f64();
    c.train_y = r.vec_i32();
    c.test_x = r.vec_f64();
    c.test_y = r.vec_i32();
    c.validate();
  }
  return out;
}

}  // namespace caafp::data
