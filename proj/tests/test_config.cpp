#include <cctype>

#include "caafp/config.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace caafp;

TEST_CASE("kv text parsing handles comments, blanks, and whitespace") {
  const auto kv = cfg::parse_kv_text(
      "# leading comment\n"
      "\n"
      "  seed = 42   # trailing comment\n"
      "\ttrain.lr=0.01\n"
      "dataset =wisdm\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("seed") == "42");
  CHECK(kv.at("train.lr") == "0.01");
  CHECK(kv.at("dataset") == "wisdm");
}

TEST_CASE("kv text parsing rejects malformed lines") {
  CHECK_THROWS_AS(cfg::parse_kv_text("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_kv_text("just some words\n"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_kv_text("= 5\n"), ConfigError);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("sedd = 1\n")), ConfigError);
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("train.lr = fast\n")), ConfigError);
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("phases.prune = 12.5\n")), ConfigError);
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("standardize = maybe\n")), ConfigError);
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("dataset = mnist\n")), ConfigError);
  CHECK_THROWS_AS(cfg::config_from_kv(cfg::parse_kv_text("method = magic\n")), ConfigError);
}

TEST_CASE("standardization defaults on only for wisdm") {
  CHECK(cfg::config_from_kv({}).standardize == false);
  CHECK(cfg::config_from_kv({{"dataset", "wisdm"}}).standardize == true);
  CHECK(cfg::config_from_kv({{"dataset", "ucihar"}}).standardize == false);
  CHECK(cfg::config_from_kv({{"dataset", "wisdm"}, {"standardize", "false"}}).standardize == false);
}

TEST_CASE("derived seeds default to mixes of the master seed") {
  const auto c = cfg::config_from_kv({{"seed", "7"}});
  CHECK(c.scenario.seed == seed_mix({7, seed_tag::scenario}));
  CHECK(c.synth.seed == seed_mix({7, seed_tag::synth}));
  const auto pinned = cfg::config_from_kv({{"seed", "7"}, {"scenario.seed", "123"}});
  CHECK(pinned.scenario.seed == 123);
}

TEST_CASE("config round-trips through its kv form") {
  const auto kv = cfg::parse_kv_text(
      "seed = 99\n"
      "method = oneshot-prune\n"
      "dataset = wisdm\n"
      "dataset.path = /tmp/somewhere\n"
      "scenario = noisy\n"
      "scenario.noise = 0.25\n"
      "synth.clusters = 4\n"
      "model.filters = 16\n"
      "phases.warmup = 2\n"
      "phases.prune = 17\n"
      "train.lr = 0.0005\n"
      "train.lambda = 0.3\n"
      "score.alpha = 0.2\n"
      "score.beta = 0.3\n"
      "score.gamma = 0.5\n"
      "prune.start = 0.1\n"
      "prune.target = 0.6\n"
      "prune.frequency = 5\n"
      "prune.churn = 0.05\n"
      "comm.mask_bytes = true\n");
  const auto cfg1 = cfg::config_from_kv(kv);
  const auto full = cfg::kv_from_config(cfg1);
  const auto cfg2 = cfg::config_from_kv(full);
  // KvMap equality is the identity check; the config struct has no operator==.
  CHECK(cfg::kv_from_config(cfg2) == full);
  CHECK(cfg::kv_text(full) == cfg::kv_text(cfg::kv_from_config(cfg2)));
  // Spot checks that the overrides actually landed.
  CHECK(cfg1.schedule.target_sparsity == 0.6);
  CHECK(cfg1.schedule.total_rounds == 17);
  CHECK(cfg1.weights.gamma == 0.5);
  CHECK(cfg1.include_mask_bytes == true);
}

TEST_CASE("config hash ignores run identity but tracks hyperparameters") {
  const auto base = cfg::config_from_kv(cfg::parse_kv_text("seed = 1\n"));
  const auto h = cfg::config_hash(base);
  REQUIRE(h.size() == 16);
  for (char ch : h) CHECK(std::isxdigit(static_cast<unsigned char>(ch)));

  auto reseeded = base;
  reseeded.seed = 777;
  reseeded.scenario.seed = 31337;
  reseeded.synth.seed = 4096;
  CHECK(cfg::config_hash(reseeded) == h);

  auto tweaked = base;
  tweaked.learning_rate = 5e-4;
  CHECK(cfg::config_hash(tweaked) != h);
  auto reweighted = base;
  reweighted.weights.alpha = 0.9;
  CHECK(cfg::config_hash(reweighted) != h);
}
