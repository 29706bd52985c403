#pragma once

#include <map>
#include <string>

#include "caafp/federation.hpp"

namespace caafp::cfg {

// std::map keeps keys sorted, which doubles as the canonical order.
using KvMap = std::map<std::string, std::string>;

// `key = value` lines; '#' starts a comment; blank lines are skipped.
// Duplicate keys are rejected so typos fail loudly.
KvMap parse_config_file(const std::string& path);
KvMap parse_kv_text(const std::string& text);
std::string kv_text(const KvMap& kv);

// Unknown keys or unparsable values are config errors. Derived seeds
// (scenario.seed, synth.seed) default to mixes of the master seed when absent.
fed::ExperimentConfig config_from_kv(const KvMap& kv);

// Emits every key so the result re-parses to an identical config.
KvMap kv_from_config(const fed::ExperimentConfig& cfg);

// FNV-1a over the canonical text minus run-identity keys (seed and the
// derived seeds), so repetitions of one configuration share a hash.
std::string config_hash(const fed::ExperimentConfig& cfg);

}  // namespace caafp::cfg
