#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "caafp/common.hpp"

namespace caafp::metrics {

enum class Direction { down = 0, up = 1 };

// One model transfer. nonzero_count is the number of 4-byte parameter values
// actually shipped; aux_bytes covers optional extras such as a mask bitmap.
struct Transmission {
  int round = 0;
  int client = 0;
  Direction direction = Direction::down;
  std::uint64_t nonzero_count = 0;
  std::uint64_t aux_bytes = 0;
};

// Total volume in MB: sum of nonzero_count * 4 bytes plus aux bytes, MB = 2^20.
double comm_cost_mb(std::span<const Transmission> log);

// Population standard deviation of per-client accuracies.
double fairness(std::span<const double> accuracies);

// mu / sigma; +infinity when sigma is zero.
double score_ratio(double mu, double sigma);

struct RoundMetrics {
  int round = 0;
  std::string phase;
  std::vector<double> client_accuracy;
  double mu = 0.0;
  double sigma = 0.0;
  double round_mb = 0.0;       // traffic attributed to this round
  double cumulative_mb = 0.0;  // non-decreasing across rounds
  double mean_sparsity = 0.0;  // mean over cluster masks (0 for dense)
};

// One row per finished (config, seed) run; what sweeps collect and report
// aggregates.
struct ResultRow {
  std::string method;
  std::string dataset;
  std::string scenario;
  std::uint64_t seed = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double start_sparsity = 0.0, target_sparsity = 0.0;
  int finetune_epochs = 0;
  double final_sparsity = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double comm_mb = 0.0;
  std::string config_hash;
};

// Doubles are printed with enough digits to round-trip exactly.
std::string format_double(double v);
double parse_double_field(const std::string& s);

struct RunMeta {
  std::string method;
  std::string dataset;
  std::string scenario;
  std::uint64_t seed = 0;
};

// Per-round CSV: header, one row per evaluated round, then a summary row with
// "final" in the round column.
void write_rounds_csv(std::ostream& os, const RunMeta& meta,
                      std::span<const RoundMetrics> rounds, const RoundMetrics& final_metrics);

inline constexpr const char* kRoundsCsvHeader =
    "method,dataset,scenario,seed,round,mu,sigma,sparsity,comm_mb";
inline constexpr const char* kResultsCsvHeader =
    "method,dataset,scenario,seed,alpha,beta,gamma,start_sparsity,target_sparsity,"
    "finetune_epochs,final_sparsity,mu,sigma,comm_mb,config_hash";

void write_results_csv(std::ostream& os, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(std::istream& is, const std::string& origin);

// Summary rows extracted from a rounds CSV are also accepted by `report`.
std::vector<ResultRow> read_rounds_summary_csv(std::istream& is, const std::string& origin);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace caafp::metrics
