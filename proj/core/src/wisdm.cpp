#include "caafp/wisdm.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <string_view>

namespace caafp::data {

const std::vector<std::string>& wisdm_activities() {
  static const std::vector<std::string> kActivities = {
      "Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"};
  return kActivities;
}

namespace {

int activity_index(std::string_view name) {
  const auto& acts = wisdm_activities();
  for (std::size_t i = 0; i < acts.size(); ++i)
    if (name == acts[i]) return static_cast<int>(i);
  return -1;
}

bool parse_double(std::string_view s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc{} && r.ptr == e;
}

struct Reading {
  int activity;
  double x, y, z;
};

}  // namespace

std::vector<ClientDataset> load_wisdm(const std::string& path, WisdmLoadReport* report) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");

  WisdmLoadReport local;
  WisdmLoadReport& rep = report ? *report : local;
  rep = {};

  // Readings per user in file order; contiguity of activities is decided on
  // that order, matching how the log was recorded.
  std::map<int, std::vector<Reading>> streams;

  std::string line;
  while (std::getline(is, line)) {
    std::string_view sv(line);
    while (!sv.empty() && (sv.back() == '\r' || sv.back() == ' ')) sv.remove_suffix(1);
    while (!sv.empty() && (sv.back() == ';')) sv.remove_suffix(1);
    if (sv.empty()) continue;
    ++rep.parsed_lines;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= sv.size(); ++i) {
      if (i == sv.size() || sv[i] == ',') {
        fields.push_back(sv.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 6) {
      ++rep.malformed_lines;
      continue;
    }
    int user = 0;
    {
      auto r = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), user);
      if (r.ec != std::errc{} || r.ptr != fields[0].data() + fields[0].size()) {
        ++rep.malformed_lines;
        continue;
      }
    }
    const int act = activity_index(fields[1]);
    double ts, x, y, z;
    if (act < 0 || !parse_double(fields[2], ts) || !parse_double(fields[3], x) ||
        !parse_double(fields[4], y) || !parse_double(fields[5], z)) {
      ++rep.malformed_lines;
      continue;
    }
    streams[user].push_back({act, x, y, z});
  }

  std::vector<ClientDataset> clients;
  for (const auto& [user, readings] : streams) {
    ClientDataset ds;
    ds.client_id = user;
    ds.timesteps = kWisdmWindow;
    ds.channels = 3;
    ds.num_classes = static_cast<int>(wisdm_activities().size());

    std::size_t run_start = 0;
    auto cut_run = [&](std::size_t begin, std::size_t end) {
      const std::size_t len = end - begin;
      if (len < kWisdmWindow) return;
      for (std::size_t s = begin; s + kWisdmWindow <= end; s += kWisdmStride) {
        for (std::size_t i = s; i < s + kWisdmWindow; ++i) {
          ds.train_x.push_back(readings[i].x);
          ds.train_x.push_back(readings[i].y);
          ds.train_x.push_back(readings[i].z);
        }
        ds.train_y.push_back(readings[begin].activity);
        ++rep.total_windows;
      }
    };
    for (std::size_t i = 1; i <= readings.size(); ++i) {
      if (i == readings.size() || readings[i].activity != readings[run_start].activity) {
        cut_run(run_start, i);
        run_start = i;
      }
    }

    if (ds.train_y.empty()) {
      rep.dropped_users.push_back(user);
      continue;
    }
    ds.validate();
    clients.push_back(std::move(ds));
  }

  if (clients.empty()) throw DataError("load_wisdm: no usable windows in '" + path + "'");
  return clients;
}

}  // namespace caafp::data
