#include "caafp/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>

namespace caafp::metrics {

double comm_cost_mb(std::span<const Transmission> log) {
  // Integer byte tally first; the division happens once, so long logs do not
  // accumulate floating error.
  std::uint64_t payload = 0, aux = 0;
  for (const auto& t : log) {
    payload += t.nonzero_count;
    aux += t.aux_bytes;
  }
  return (static_cast<double>(payload) * 4.0 + static_cast<double>(aux)) / (1024.0 * 1024.0);
}

double fairness(std::span<const double> accuracies) {
  if (accuracies.empty()) throw ConfigError("fairness: no accuracies");
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double a : accuracies) {
    const double d = a - mean;
    var += d * d;
  }
  var /= static_cast<double>(accuracies.size());
  return std::sqrt(var);
}

double score_ratio(double mu, double sigma) {
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  return mu / sigma;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double_field(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw DataError("csv: bad numeric field '" + s + "'");
  return v;
}

namespace {

template <typename T>
T parse_integer_field(const std::string& s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw DataError("csv: bad integer field '" + s + "'");
  return v;
}

}  // namespace

namespace {

void write_round_row(std::ostream& os, const RunMeta& meta, const std::string& round_label,
                     const RoundMetrics& m) {
  os << meta.method << ',' << meta.dataset << ',' << meta.scenario << ',' << meta.seed << ','
     << round_label << ',' << format_double(m.mu) << ',' << format_double(m.sigma) << ','
     << format_double(m.mean_sparsity) << ',' << format_double(m.cumulative_mb) << '\n';
}

}  // namespace

void write_rounds_csv(std::ostream& os, const RunMeta& meta,
                      std::span<const RoundMetrics> rounds, const RoundMetrics& final_metrics) {
  os << kRoundsCsvHeader << '\n';
  for (const auto& m : rounds) write_round_row(os, meta, std::to_string(m.round), m);
  write_round_row(os, meta, "final", final_metrics);
}

void write_results_csv(std::ostream& os, std::span<const ResultRow> rows) {
  os << kResultsCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.dataset << ',' << r.scenario << ',' << r.seed << ','
       << format_double(r.alpha) << ',' << format_double(r.beta) << ',' << format_double(r.gamma)
       << ',' << format_double(r.start_sparsity) << ',' << format_double(r.target_sparsity) << ','
       << r.finetune_epochs << ',' << format_double(r.final_sparsity) << ','
       << format_double(r.mu) << ',' << format_double(r.sigma) << ',' << format_double(r.comm_mb)
       << ',' << r.config_hash << '\n';
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<ResultRow> read_results_csv(std::istream& is, const std::string& origin) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(origin + ": empty file");
  if (line != kResultsCsvHeader) throw DataError(origin + ": unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 15) throw DataError(origin + ": row with wrong field count");
    ResultRow r;
    r.method = f[0];
    r.dataset = f[1];
    r.scenario = f[2];
    r.seed = parse_integer_field<std::uint64_t>(f[3]);
    r.alpha = parse_double_field(f[4]);
    r.beta = parse_double_field(f[5]);
    r.gamma = parse_double_field(f[6]);
    r.start_sparsity = parse_double_field(f[7]);
    r.target_sparsity = parse_double_field(f[8]);
    r.finetune_epochs = parse_integer_field<int>(f[9]);
    r.final_sparsity = parse_double_field(f[10]);
    r.mu = parse_double_field(f[11]);
    r.sigma = parse_double_field(f[12]);
    r.comm_mb = parse_double_field(f[13]);
    r.config_hash = f[14];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> read_rounds_summary_csv(std::istream& is, const std::string& origin) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(origin + ": empty file");
  if (line != kRoundsCsvHeader) throw DataError(origin + ": unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw DataError(origin + ": row with wrong field count");
    if (f[4] != "final") continue;
    ResultRow r;
    r.method = f[0];
    r.dataset = f[1];
    r.scenario = f[2];
    r.seed = parse_integer_field<std::uint64_t>(f[3]);
    r.mu = parse_double_field(f[5]);
    r.sigma = parse_double_field(f[6]);
    r.final_sparsity = parse_double_field(f[7]);
    r.comm_mb = parse_double_field(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace caafp::metrics
