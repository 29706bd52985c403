#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caafp/common.hpp"

namespace caafp::nn {

// 1D-CNN over (timesteps, channels) windows: two conv blocks
// (conv -> relu -> maxpool -> dropout), one hidden dense layer with dropout,
// and a softmax head. Convolutions use valid padding; pooling floors odd
// lengths. Only kernels are prunable, biases always stay dense.
struct ArchitectureSpec {
  int timesteps = 128;
  int channels = 9;
  int num_classes = 6;
  int conv_filters = 64;
  int kernel_size = 5;
  int pool_size = 2;
  int dense_units = 32;
  double dropout_conv1 = 0.3;
  double dropout_conv2 = 0.3;
  double dropout_dense = 0.2;

  int conv1_len() const { return timesteps - kernel_size + 1; }
  int pool1_len() const { return conv1_len() / pool_size; }
  int conv2_len() const { return pool1_len() - kernel_size + 1; }
  int pool2_len() const { return conv2_len() / pool_size; }
  int flatten_size() const { return pool2_len() * conv_filters; }

  void validate() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

struct TensorSlot {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool prunable = false;
};

// Flat parameter layout derived from an ArchitectureSpec. Two layouts built
// from equal specs compare equal and index parameters identically.
class Layout {
 public:
  explicit Layout(const ArchitectureSpec& spec);

  const ArchitectureSpec& spec() const { return spec_; }
  std::size_t total_size() const { return total_; }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  const TensorSlot& slot(std::string_view name) const;

  // Flat indices of prunable positions, ascending. Mask bit i governs
  // parameter prunable_indices()[i].
  const std::vector<std::size_t>& prunable_indices() const { return prunable_; }
  std::size_t prunable_count() const { return prunable_.size(); }

  bool operator==(const Layout& o) const { return spec_ == o.spec_; }

 private:
  ArchitectureSpec spec_;
  std::vector<TensorSlot> slots_;
  std::vector<std::size_t> prunable_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

struct ParamSet {
  LayoutPtr layout;
  std::vector<double> values;

  std::span<double> slice(std::string_view name);
  std::span<const double> slice(std::string_view name) const;
};

using GradientSet = std::vector<double>;

ParamSet zeros_like(const LayoutPtr& layout);

// Debug dump: raw little-endian float32 values in layout order, nothing else.
void dump_f32(const ParamSet& params, const std::string& path);

}  // namespace caafp::nn
