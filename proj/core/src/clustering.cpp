#include "caafp/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "caafp/local_train.hpp"

namespace caafp::cluster {

void ClusterAssignment::validate() const {
  std::vector<bool> seen(cluster_of.size(), false);
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) throw ConfigError("cluster assignment: empty cluster");
    for (int m : members[c]) {
      if (m < 0 || static_cast<std::size_t>(m) >= cluster_of.size() || seen[m] ||
          cluster_of[m] != static_cast<int>(c))
        throw ConfigError("cluster assignment: not a partition");
      seen[m] = true;
    }
  }
  for (bool s : seen)
    if (!s) throw ConfigError("cluster assignment: unassigned client");
}

UpdateDelta compute_delta(const nn::Network& net, const nn::ParamSet& reference,
                          const data::ClientDataset& client, const ProbeConfig& probe) {
  nn::ParamSet params = reference;
  nn::OptimizerState state = nn::OptimizerState::fresh(params.values.size());

  fed::LocalTrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = probe.batch_size;
  opts.adam.learning_rate = probe.learning_rate;
  opts.dropout = false;  // keeps the delta a pure function of data and seed
  opts.seed = probe.seed;
  fed::local_train(net, params, state, client, opts);

  UpdateDelta d;
  d.client_id = client.client_id;
  d.delta.resize(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i)
    d.delta[i] = params.values[i] - reference.values[i];
  return d;
}

std::vector<double> cosine_distance_matrix(const std::vector<UpdateDelta>& deltas) {
  const std::size_t n = deltas.size();
  if (n == 0) throw ConfigError("cosine_distance_matrix: no deltas");
  const std::size_t dim = deltas.front().delta.size();
  for (const auto& d : deltas)
    if (d.delta.size() != dim) throw ConfigError("cosine_distance_matrix: ragged deltas");

  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : deltas[i].delta) s += v * v;
    norm[i] = std::sqrt(s);
  }

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d;
      if (norm[i] == 0.0 || norm[j] == 0.0) {
        d = 1.0;  // direction undefined; treat as orthogonal
      } else {
        double dot = 0.0;
        for (std::size_t t = 0; t < dim; ++t) dot += deltas[i].delta[t] * deltas[j].delta[t];
        d = 1.0 - dot / (norm[i] * norm[j]);
      }
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }
  return dist;
}

ClusterAssignment agglomerative_cluster(const std::vector<double>& dist, int n, int k) {
  if (n < 1) throw ConfigError("agglomerative_cluster: no clients");
  if (k < 1 || k > n) throw ConfigError("agglomerative_cluster: k must be in [1, n]");
  if (dist.size() != static_cast<std::size_t>(n) * n)
    throw ConfigError("agglomerative_cluster: matrix size mismatch");

  // Active clusters as parallel arrays; Lance-Williams update keeps the
  // inter-cluster averages without rescanning the original matrix.
  std::vector<std::vector<int>> members(n);
  std::vector<double> size(n, 1.0);
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    members[i] = {i};
    for (int j = 0; j < n; ++j) d[i][j] = dist[static_cast<std::size_t>(i) * n + j];
  }

  while (static_cast<int>(members.size()) > k) {
    const int m = static_cast<int>(members.size());
    int bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (d[i][j] < best) {  // strict: ties keep the lowest (i, j)
          best = d[i][j];
          bi = i;
          bj = j;
        }

    for (int t = 0; t < m; ++t) {
      if (t == bi || t == bj) continue;
      d[bi][t] = d[t][bi] = (size[bi] * d[bi][t] + size[bj] * d[bj][t]) / (size[bi] + size[bj]);
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    size[bi] += size[bj];

    members.erase(members.begin() + bj);
    size.erase(size.begin() + bj);
    d.erase(d.begin() + bj);
    for (auto& row : d) row.erase(row.begin() + bj);
  }

  for (auto& g : members) std::sort(g.begin(), g.end());
  std::sort(members.begin(), members.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  ClusterAssignment out;
  out.members = std::move(members);
  out.cluster_of.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t c = 0; c < out.members.size(); ++c)
    for (int i : out.members[c]) out.cluster_of[static_cast<std::size_t>(i)] = static_cast<int>(c);
  out.validate();
  return out;
}

double rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw ConfigError("rand_index: assignments must be non-empty and equal-sized");
  if (a.size() == 1) return 1.0;
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      agree += same_a == same_b;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

void write_distance_csv(const std::vector<double>& dist, int n, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.precision(17);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j) os << ',';
      os << dist[static_cast<std::size_t>(i) * n + j];
    }
    os << '\n';
  }
}

void write_assignment_csv(const ClusterAssignment& a, std::span<const int> client_ids,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "client_id,cluster\n";
  for (std::size_t i = 0; i < a.cluster_of.size(); ++i) {
    const int id = i < client_ids.size() ? client_ids[i] : static_cast<int>(i);
    os << id << ',' << a.cluster_of[i] << '\n';
  }
}

}  // namespace caafp::cluster
