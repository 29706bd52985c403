#pragma once

#include <string>
#include <vector>

#include "caafp/dataset.hpp"

namespace caafp::data {

// Raw accelerometer log format: "user,activity,timestamp,x,y,z;" one reading
// per line. Windows of 200 readings with stride 100 are cut from
// activity-contiguous runs per user, so a run of N rows yields
// floor((N-200)/100)+1 windows when N >= 200 and none otherwise.
inline constexpr int kWisdmWindow = 200;
inline constexpr int kWisdmStride = 100;

const std::vector<std::string>& wisdm_activities();  // fixed label order

struct WisdmLoadReport {
  std::size_t parsed_lines = 0;
  std::size_t malformed_lines = 0;
  std::size_t total_windows = 0;
  std::vector<int> dropped_users;  // users whose runs were all too short
};

// One ClientDataset per user (ascending user id), all samples in the train
// part. Malformed lines are skipped and counted, never fatal.
std::vector<ClientDataset> load_wisdm(const std::string& path, WisdmLoadReport* report = nullptr);

}  // namespace caafp::data
