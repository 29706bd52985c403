#include "caafp/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "caafp/metrics.hpp"

namespace caafp::cfg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void parse_into(KvMap& kv, std::istream& is, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config: " + key + ": not an integer: '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config: " + key + ": not an unsigned integer: '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config: " + key + ": not a number: '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + ": expected true/false: '" + v + "'");
}

struct Taker {
  KvMap kv;

  bool has(const std::string& k) const { return kv.count(k) != 0; }
  std::string str(const std::string& k, const std::string& dflt) {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  }
  int geti(const std::string& k, int dflt) {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    int v = static_cast<int>(to_int(k, it->second));
    kv.erase(it);
    return v;
  }
  std::uint64_t getu(const std::string& k, std::uint64_t dflt) {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    std::uint64_t v = to_u64(k, it->second);
    kv.erase(it);
    return v;
  }
  double getd(const std::string& k, double dflt) {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    double v = to_double(k, it->second);
    kv.erase(it);
    return v;
  }
  bool getb(const std::string& k, bool dflt) {
    auto it = kv.find(k);
    if (it == kv.end()) return dflt;
    bool v = to_bool(k, it->second);
    kv.erase(it);
    return v;
  }
};

}  // namespace

KvMap parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  KvMap kv;
  parse_into(kv, is, path);
  return kv;
}

KvMap parse_kv_text(const std::string& text) {
  std::istringstream is(text);
  KvMap kv;
  parse_into(kv, is, "<config>");
  return kv;
}

std::string kv_text(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

fed::ExperimentConfig config_from_kv(const KvMap& in) {
  Taker t{in};
  fed::ExperimentConfig c;

  c.seed = t.getu("seed", c.seed);
  c.method = fed::method_from_name(t.str("method", "caafp"));
  c.dataset = t.str("dataset", c.dataset);
  if (c.dataset != "synth" && c.dataset != "wisdm" && c.dataset != "ucihar")
    throw ConfigError("config: dataset must be synth, wisdm, or ucihar");
  c.dataset_path = t.str("dataset.path", "");
  c.test_fraction = t.getd("test_fraction", c.test_fraction);
  c.standardize = t.getb("standardize", c.dataset == "wisdm");

  c.scenario.kind = data::scenario_kind_from_name(t.str("scenario", "standard"));
  c.scenario.client_fraction = t.getd("scenario.fraction", c.scenario.client_fraction);
  c.scenario.label_noise_rate = t.getd("scenario.noise", c.scenario.label_noise_rate);
  c.scenario.classes_per_client = t.geti("scenario.k", c.scenario.classes_per_client);
  c.scenario.seed = t.getu("scenario.seed", seed_mix({c.seed, seed_tag::scenario}));

  c.synth.clusters = t.geti("synth.clusters", c.synth.clusters);
  c.synth.clients_per_cluster = t.geti("synth.clients_per_cluster", c.synth.clients_per_cluster);
  c.synth.samples_per_client = t.geti("synth.samples", c.synth.samples_per_client);
  c.synth.window = t.geti("synth.window", c.synth.window);
  c.synth.channels = t.geti("synth.channels", c.synth.channels);
  c.synth.classes = t.geti("synth.classes", c.synth.classes);
  c.synth.noise = t.getd("synth.noise", c.synth.noise);
  c.synth.cluster_phase = t.getd("synth.phase", c.synth.cluster_phase);
  c.synth.cluster_offset = t.getd("synth.offset", c.synth.cluster_offset);
  c.synth.label_shift = t.getb("synth.label_shift", c.synth.label_shift);
  c.synth.seed = t.getu("synth.seed", seed_mix({c.seed, seed_tag::synth}));

  c.arch.conv_filters = t.geti("model.filters", c.arch.conv_filters);
  c.arch.kernel_size = t.geti("model.kernel", c.arch.kernel_size);
  c.arch.pool_size = t.geti("model.pool", c.arch.pool_size);
  c.arch.dense_units = t.geti("model.dense_units", c.arch.dense_units);
  c.arch.dropout_conv1 = t.getd("model.dropout1", c.arch.dropout_conv1);
  c.arch.dropout_conv2 = t.getd("model.dropout2", c.arch.dropout_conv2);
  c.arch.dropout_dense = t.getd("model.dropout_dense", c.arch.dropout_dense);

  c.warmup_rounds = t.geti("phases.warmup", c.warmup_rounds);
  c.stabilize_rounds = t.geti("phases.stabilize", c.stabilize_rounds);
  c.prune_rounds = t.geti("phases.prune", c.prune_rounds);
  c.finetune_epochs = t.geti("phases.finetune", c.finetune_epochs);

  c.local_epochs = t.geti("train.epochs", c.local_epochs);
  c.batch_size = t.geti("train.batch", c.batch_size);
  c.learning_rate = t.getd("train.lr", c.learning_rate);
  c.lambda = t.getd("train.lambda", c.lambda);

  c.clusters = t.geti("clusters", c.clusters);
  c.clients_per_round = t.geti("clients_per_round", c.clients_per_round);

  c.weights.alpha = t.getd("score.alpha", c.weights.alpha);
  c.weights.beta = t.getd("score.beta", c.weights.beta);
  c.weights.gamma = t.getd("score.gamma", c.weights.gamma);

  c.schedule.start_sparsity = t.getd("prune.start", c.schedule.start_sparsity);
  c.schedule.target_sparsity = t.getd("prune.target", c.schedule.target_sparsity);
  c.schedule.frequency = t.geti("prune.frequency", c.schedule.frequency);
  c.schedule.churn_rate = t.getd("prune.churn", c.schedule.churn_rate);
  c.schedule.total_rounds = c.prune_rounds;

  c.eval_every = t.geti("eval_every", c.eval_every);
  c.include_mask_bytes = t.getb("comm.mask_bytes", c.include_mask_bytes);

  if (!t.kv.empty()) throw ConfigError("config: unknown key " + t.kv.begin()->first);
  return c;
}

KvMap kv_from_config(const fed::ExperimentConfig& c) {
  using metrics::format_double;
  KvMap kv;
  auto put = [&kv](const std::string& k, const std::string& v) { kv[k] = v; };

  put("method", fed::method_name(c.method));
  put("dataset", c.dataset);
  put("dataset.path", c.dataset_path);
  put("test_fraction", format_double(c.test_fraction));
  put("standardize", c.standardize ? "true" : "false");
  put("scenario", data::scenario_name(c.scenario.kind));
  put("scenario.fraction", format_double(c.scenario.client_fraction));
  put("scenario.noise", format_double(c.scenario.label_noise_rate));
  put("scenario.k", std::to_string(c.scenario.classes_per_client));
  put("scenario.seed", std::to_string(c.scenario.seed));
  put("synth.clusters", std::to_string(c.synth.clusters));
  put("synth.clients_per_cluster", std::to_string(c.synth.clients_per_cluster));
  put("synth.samples", std::to_string(c.synth.samples_per_client));
  put("synth.window", std::to_string(c.synth.window));
  put("synth.channels", std::to_string(c.synth.channels));
  put("synth.classes", std::to_string(c.synth.classes));
  put("synth.noise", format_double(c.synth.noise));
  put("synth.phase", format_double(c.synth.cluster_phase));
  put("synth.offset", format_double(c.synth.cluster_offset));
  put("synth.label_shift", c.synth.label_shift ? "true" : "false");
  put("synth.seed", std::to_string(c.synth.seed));
  put("model.filters", std::to_string(c.arch.conv_filters));
  put("model.kernel", std::to_string(c.arch.kernel_size));
  put("model.pool", std::to_string(c.arch.pool_size));
  put("model.dense_units", std::to_string(c.arch.dense_units));
  put("model.dropout1", format_double(c.arch.dropout_conv1));
  put("model.dropout2", format_double(c.arch.dropout_conv2));
  put("model.dropout_dense", format_double(c.arch.dropout_dense));
  put("phases.warmup", std::to_string(c.warmup_rounds));
  put("phases.stabilize", std::to_string(c.stabilize_rounds));
  put("phases.prune", std::to_string(c.prune_rounds));
  put("phases.finetune", std::to_string(c.finetune_epochs));
  put("train.epochs", std::to_string(c.local_epochs));
  put("train.batch", std::to_string(c.batch_size));
  put("train.lr", format_double(c.learning_rate));
  put("train.lambda", format_double(c.lambda));
  put("clusters", std::to_string(c.clusters));
  put("clients_per_round", std::to_string(c.clients_per_round));
  put("score.alpha", format_double(c.weights.alpha));
  put("score.beta", format_double(c.weights.beta));
  put("score.gamma", format_double(c.weights.gamma));
  put("prune.start", format_double(c.schedule.start_sparsity));
  put("prune.target", format_double(c.schedule.target_sparsity));
  put("prune.frequency", std::to_string(c.schedule.frequency));
  put("prune.churn", format_double(c.schedule.churn_rate));
  put("eval_every", std::to_string(c.eval_every));
  put("comm.mask_bytes", c.include_mask_bytes ? "true" : "false");
  put("seed", std::to_string(c.seed));
  return kv;
}

std::string config_hash(const fed::ExperimentConfig& cfg) {
  KvMap kv = kv_from_config(cfg);
  kv.erase("seed");
  kv.erase("scenario.seed");
  kv.erase("synth.seed");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : kv) {
    for (unsigned char ch : k + "=" + v + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace caafp::cfg
