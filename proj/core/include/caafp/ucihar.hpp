#pragma once

#include <string>
#include <vector>

#include "caafp/dataset.hpp"

namespace caafp::data {

// Official smartphone HAR directory: train/ and test/ each hold
// "Inertial Signals/<signal>_<split>.txt" (nine signals, 128 readings per
// row), y_<split>.txt (labels 1..6) and subject_<split>.txt (subjects 1..30).
// Both splits are ingested and regrouped per subject; split_client makes the
// per-client division afterwards.
std::vector<ClientDataset> load_ucihar(const std::string& root);

const std::vector<std::string>& ucihar_signals();  // channel order

inline constexpr int kUciharWindow = 128;
inline constexpr int kUciharChannels = 9;
inline constexpr int kUciharClasses = 6;

}  // namespace caafp::data
