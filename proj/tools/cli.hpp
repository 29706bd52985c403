#pragma once

#include <string>
#include <vector>

#include "caafp/config.hpp"
#include "caafp/dataset.hpp"
#include "caafp/federation.hpp"
#include "caafp/metrics.hpp"

namespace caafp::cli {

// Full pipeline from config to ready-to-train clients: generate or load the
// raw population, carve per-client test splits, apply the corruption
// scenario, then (optionally) standardize features from train statistics.
std::vector<data::ClientDataset> load_clients(const fed::ExperimentConfig& cfg);

// Scenario label used in CSV rows; non-IID runs carry their k.
std::string scenario_label(const fed::ExperimentConfig& cfg);

metrics::ResultRow result_row(const fed::ExperimentConfig& cfg, const fed::RunResult& res);

struct ReportGroup {
  metrics::ResultRow key;  // representative row; seed field unused
  int runs = 0;
  double mu_mean = 0.0, mu_std = 0.0;
  double sigma_mean = 0.0, sigma_std = 0.0;
  double comm_mean = 0.0;
  double sparsity_mean = 0.0;
  double score = 0.0;  // mu_mean / sigma_mean
};

// Groups rows by configuration (hash + labels), aggregating over seeds.
// Exact duplicate (method, seed, config_hash) triples are collapsed to one
// and reported through `duplicates`.
std::vector<ReportGroup> aggregate_rows(std::vector<metrics::ResultRow> rows, int* duplicates);

// Entry point behind main(); returns the process exit code:
// 0 success, 1 usage or config error, 2 data or I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace caafp::cli
