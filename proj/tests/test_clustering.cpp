#include <algorithm>
#include <cmath>

#include "caafp/clustering.hpp"
#include "caafp/local_train.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "testutil.hpp"

using namespace caafp;

namespace {

cluster::UpdateDelta delta_of(int id, std::vector<double> v) {
  return {id, std::move(v)};
}

std::vector<double> random_distance_matrix(int n, Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = uniform_double(rng, 0.0, 2.0);
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  return d;
}

}  // namespace

TEST_CASE("cosine distance hand values") {
  std::vector<cluster::UpdateDelta> deltas;
  deltas.push_back(delta_of(0, {1.0, 0.0}));
  deltas.push_back(delta_of(1, {1.0, 1.0}));
  deltas.push_back(delta_of(2, {1.0, 0.0}));
  deltas.push_back(delta_of(3, {-2.0, 0.0}));
  deltas.push_back(delta_of(4, {0.0, 0.0}));
  const auto d = cluster::cosine_distance_matrix(deltas);
  const int n = 5;
  CHECK(d[0 * n + 1] == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(d[0 * n + 2] == doctest::Approx(0.0));
  CHECK(d[0 * n + 3] == doctest::Approx(2.0));
  CHECK(d[0 * n + 4] == doctest::Approx(1.0));  // zero-norm convention
  for (int i = 0; i < n; ++i) {
    CHECK(d[i * n + i] == 0.0);
    for (int j = 0; j < n; ++j) {
      CHECK(d[i * n + j] == doctest::Approx(d[j * n + i]));
      CHECK(d[i * n + j] >= 0.0);
      CHECK(d[i * n + j] <= 2.0 + 1e-12);
    }
  }
}

TEST_CASE("scaling a delta by a positive constant changes nothing") {
  Rng rng = make_rng(31);
  std::vector<cluster::UpdateDelta> deltas;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v;
    for (int j = 0; j < 8; ++j) v.push_back(uniform_double(rng, -1.0, 1.0));
    deltas.push_back(delta_of(i, std::move(v)));
  }
  const auto base = cluster::cosine_distance_matrix(deltas);
  const auto assign_base = cluster::agglomerative_cluster(base, 6, 2);

  for (double& x : deltas[2].delta) x *= 37.5;
  for (double& x : deltas[5].delta) x *= 0.001;
  const auto scaled = cluster::cosine_distance_matrix(deltas);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(scaled[i] == doctest::Approx(base[i]).epsilon(1e-9));
  const auto assign_scaled = cluster::agglomerative_cluster(scaled, 6, 2);
  CHECK(assign_scaled.cluster_of == assign_base.cluster_of);
}

TEST_CASE("agglomerative edge cases") {
  Rng rng = make_rng(32);
  const auto d = random_distance_matrix(5, rng);
  SUBCASE("k equals n") {
    const auto a = cluster::agglomerative_cluster(d, 5, 5);
    for (int i = 0; i < 5; ++i) CHECK(a.cluster_of[i] == i);
  }
  SUBCASE("k of one") {
    const auto a = cluster::agglomerative_cluster(d, 5, 1);
    CHECK(a.num_clusters() == 1);
    CHECK(a.members[0].size() == 5);
  }
  SUBCASE("k beyond n is rejected") {
    CHECK_THROWS_AS(cluster::agglomerative_cluster(d, 5, 6), ConfigError);
    CHECK_THROWS_AS(cluster::agglomerative_cluster(d, 5, 0), ConfigError);
  }
}

TEST_CASE("agglomerative merges agree with the brute-force enumeration") {
  Rng rng = make_rng(33);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + static_cast<int>(bounded(rng, 6));
    const int k = 1 + static_cast<int>(bounded(rng, static_cast<std::size_t>(n)));
    const auto d = random_distance_matrix(n, rng);
    const auto fast = cluster::agglomerative_cluster(d, n, k);
    const auto slow = oracle::linkage_bruteforce(d, n, k);
    CHECK(fast.cluster_of == slow.cluster_of);
  }
}

TEST_CASE("client permutation relabels but does not regroup") {
  Rng rng = make_rng(34);
  const int n = 7;
  const auto d = random_distance_matrix(n, rng);
  const auto base = cluster::agglomerative_cluster(d, n, 3);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  deterministic_shuffle(perm, rng);
  std::vector<double> pd(d.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pd[i * n + j] = d[perm[i] * n + perm[j]];
  const auto permuted = cluster::agglomerative_cluster(pd, n, 3);

  std::vector<int> mapped(n);
  for (int i = 0; i < n; ++i) mapped[i] = permuted.cluster_of[i];
  std::vector<int> original(n);
  for (int i = 0; i < n; ++i) original[i] = base.cluster_of[perm[i]];
  CHECK(cluster::rand_index(mapped, original) == doctest::Approx(1.0));
}

TEST_CASE("rand index hand values") {
  CHECK(cluster::rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{1, 1, 0, 0}) ==
        doctest::Approx(1.0));
  CHECK(cluster::rand_index(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 1, 2, 3}) ==
        doctest::Approx(0.0));
  // pairs: (01) split vs joined disagree, (23) joined both, rest split both
  CHECK(cluster::rand_index(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 0, 1, 1}) ==
        doctest::Approx(5.0 / 6.0));
}

TEST_CASE("probe with zero learning rate yields a zero delta") {
  const auto a = test::tiny_arch();
  nn::Network net(a);
  const auto ref = net.init_params(41);
  const auto client = test::make_client(0, a, 6, 2, 42);
  cluster::ProbeConfig probe;
  probe.learning_rate = 0.0;
  probe.seed = 43;
  const auto delta = cluster::compute_delta(net, ref, client, probe);
  for (double v : delta.delta) CHECK(v == 0.0);
}

TEST_CASE("probe deltas are deterministic and leave the reference intact") {
  const auto a = test::tiny_arch();
  nn::Network net(a);
  const auto ref = net.init_params(44);
  const auto before = ref.values;
  const auto client = test::make_client(3, a, 6, 2, 45);
  cluster::ProbeConfig probe;
  probe.seed = 46;
  const auto d1 = cluster::compute_delta(net, ref, client, probe);
  const auto d2 = cluster::compute_delta(net, ref, client, probe);
  CHECK(d1.delta == d2.delta);
  CHECK(d1.client_id == 3);
  CHECK(ref.values == before);
}

TEST_CASE("single full-batch epoch moves each weight by one adam step") {
  const auto a = test::tiny_arch();
  nn::Network net(a);
  Rng rng = make_rng(47);
  auto ref = net.init_params(48);
  test::nudge_off_zero(ref.values, rng);
  const auto client = test::make_client(0, a, 4, 1, 49);

  cluster::ProbeConfig probe;
  probe.batch_size = 16;  // one batch covers the whole split
  probe.seed = 50;
  const auto delta = cluster::compute_delta(net, ref, client, probe);

  const auto g = net.loss_and_grad(ref, fed::train_batch(client), client.train_y, nullptr, 0.0);
  // fresh adam at t=1 reduces to lr * g/(|g| + eps), i.e. lr * sign(g)
  for (std::size_t i = 0; i < g.grads.size(); ++i)
    if (std::abs(g.grads[i]) > 1e-6)
      CHECK(delta.delta[i] ==
            doctest::Approx(-1e-3 * (g.grads[i] / (std::abs(g.grads[i]) + 1e-8))).epsilon(1e-9));
}

TEST_CASE("distance and assignment CSV dumps are well formed") {
  std::vector<cluster::UpdateDelta> deltas;
  deltas.push_back(delta_of(0, {1.0, 0.0}));
  deltas.push_back(delta_of(1, {0.0, 1.0}));
  deltas.push_back(delta_of(2, {1.0, 0.1}));
  const auto d = cluster::cosine_distance_matrix(deltas);
  const auto a = cluster::agglomerative_cluster(d, 3, 2);
  a.validate();

  test::TempDir tmp("clustercsv");
  cluster::write_distance_csv(d, 3, tmp.file("d.csv"));
  std::vector<int> ids = {10, 11, 12};
  cluster::write_assignment_csv(a, ids, tmp.file("a.csv"));

  std::ifstream is(tmp.file("a.csv"));
  std::string header;
  std::getline(is, header);
  CHECK(header == "client_id,cluster");
  std::string row;
  std::getline(is, row);
  CHECK(row == "10,0");
}
