#include "caafp/ucihar.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace caafp::data {

const std::vector<std::string>& ucihar_signals() {
  static const std::vector<std::string> kSignals = {
      "body_acc_x", "body_acc_y", "body_acc_z",
      "body_gyro_x", "body_gyro_y", "body_gyro_z",
      "total_acc_x", "total_acc_y", "total_acc_z"};
  return kSignals;
}

namespace {

std::vector<std::vector<double>> read_signal_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    row.reserve(kUciharWindow);
    double v;
    while (ss >> v) row.push_back(v);
    if (static_cast<int>(row.size()) != kUciharWindow)
      throw DataError("'" + path + "': row with " + std::to_string(row.size()) +
                      " values, expected " + std::to_string(kUciharWindow));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<int> read_int_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<int> vals;
  int v;
  while (is >> v) vals.push_back(v);
  return vals;
}

void ingest_split(const std::string& root, const std::string& split,
                  std::map<int, ClientDataset>& by_subject) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / split;
  if (!fs::exists(base)) throw IoError("missing directory '" + base.string() + "'");

  std::vector<std::vector<std::vector<double>>> signals;
  for (const auto& name : ucihar_signals())
    signals.push_back(
        read_signal_file((base / "Inertial Signals" / (name + "_" + split + ".txt")).string()));

  const std::size_t n = signals.front().size();
  for (const auto& s : signals)
    if (s.size() != n) throw DataError("ucihar: signal files disagree on sample count");

  const std::vector<int> labels = read_int_file((base / ("y_" + split + ".txt")).string());
  const std::vector<int> subjects = read_int_file((base / ("subject_" + split + ".txt")).string());
  if (labels.size() != n || subjects.size() != n)
    throw DataError("ucihar: label/subject count does not match signal rows");

  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 1 || labels[i] > kUciharClasses)
      throw DataError("ucihar: label out of range 1..6");
    ClientDataset& ds = by_subject[subjects[i]];
    if (ds.train_y.empty()) {
      ds.client_id = subjects[i];
      ds.timesteps = kUciharWindow;
      ds.channels = kUciharChannels;
      ds.num_classes = kUciharClasses;
    }
    for (int t = 0; t < kUciharWindow; ++t)
      for (int c = 0; c < kUciharChannels; ++c) ds.train_x.push_back(signals[c][i][t]);
    ds.train_y.push_back(labels[i] - 1);
  }
}

}  // namespace

std::vector<ClientDataset> load_ucihar(const std::string& root) {
  std::map<int, ClientDataset> by_subject;
  ingest_split(root, "train", by_subject);
  ingest_split(root, "test", by_subject);

  std::vector<ClientDataset> clients;
  clients.reserve(by_subject.size());
  for (auto& [subject, ds] : by_subject) {
    ds.validate();
    clients.push_back(std::move(ds));
  }
  if (clients.empty()) throw DataError("load_ucihar: no subjects found under '" + root + "'");
  return clients;
}

}  // namespace caafp::data
