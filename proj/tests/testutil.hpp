#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "caafp/arch.hpp"
#include "caafp/common.hpp"
#include "caafp/dataset.hpp"

namespace caafp::test {

// Smallest stack that still exercises every layer: 16x2 window, 3 classes,
// conv1 16->12->6, conv2 6->2->1, flatten 3.
inline nn::ArchitectureSpec tiny_arch() {
  nn::ArchitectureSpec a;
  a.timesteps = 16;
  a.channels = 2;
  a.num_classes = 3;
  a.conv_filters = 3;
  a.kernel_size = 5;
  a.pool_size = 2;
  a.dense_units = 4;
  return a;
}

// Degenerate 1-filter kernel-1 stack whose forward pass is hand-computable.
inline nn::ArchitectureSpec toy_arch() {
  nn::ArchitectureSpec a;
  a.timesteps = 4;
  a.channels = 1;
  a.num_classes = 2;
  a.conv_filters = 1;
  a.kernel_size = 1;
  a.pool_size = 2;
  a.dense_units = 1;
  a.dropout_conv1 = 0.0;
  a.dropout_conv2 = 0.0;
  a.dropout_dense = 0.0;
  return a;
}

// Gradient checks must start off zero: zero-initialized biases put ReLU
// pre-activations exactly on the kink where the subgradient convention and
// central differences legitimately disagree.
inline void nudge_off_zero(std::vector<double>& values, Rng& rng) {
  for (double& v : values) v += uniform_double(rng, 0.05, 0.2);
}

// Separable little client: class y puts a bump of height (y+1) at channel 0.
inline data::ClientDataset make_client(int id, const nn::ArchitectureSpec& a, int train_n,
                                       int test_n, std::uint64_t seed) {
  data::ClientDataset ds;
  ds.client_id = id;
  ds.timesteps = a.timesteps;
  ds.channels = a.channels;
  ds.num_classes = a.num_classes;
  Rng rng = make_rng(seed);
  auto fill = [&](std::vector<double>& x, std::vector<int>& y, int n) {
    for (int i = 0; i < n; ++i) {
      const int label = i % a.num_classes;
      for (int t = 0; t < a.timesteps; ++t)
        for (int c = 0; c < a.channels; ++c) {
          double v = 0.1 * uniform_double(rng, -1.0, 1.0);
          if (c == 0) v += (label + 1) * (t < a.timesteps / 2 ? 1.0 : -1.0);
          x.push_back(v);
        }
      y.push_back(label);
    }
  };
  fill(ds.train_x, ds.train_y, train_n);
  fill(ds.test_x, ds.test_y, test_n);
  return ds;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("caafp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream os(path);
  os << text;
}

}  // namespace caafp::test
