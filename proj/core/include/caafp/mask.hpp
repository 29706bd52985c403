#pragma once

#include <cstdint>
#include <vector>

#include "caafp/common.hpp"

namespace caafp::prune {

// Binary mask over the prunable positions of a parameter layout. Bit i
// corresponds to Layout::prunable_indices()[i]; 1 means the weight is active.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t n, bool active = true)
      : bits_(n, active ? 1 : 0), active_(active ? n : 0) {}

  std::size_t size() const { return bits_.size(); }
  bool active(std::size_t i) const { return bits_[i] != 0; }

  void set(std::size_t i, bool a) {
    if ((bits_[i] != 0) == a) return;
    bits_[i] = a ? 1 : 0;
    active_ += a ? 1 : -1;
  }

  std::size_t active_count() const { return static_cast<std::size_t>(active_); }
  std::size_t zero_count() const { return bits_.size() - active_count(); }

  double sparsity() const {
    return bits_.empty() ? 0.0 : static_cast<double>(zero_count()) / static_cast<double>(bits_.size());
  }

  // Number of positions whose state differs; churn-only steps flip exactly
  // 2 * N_churn of them.
  std::size_t flip_count(const Mask& o) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) n += bits_[i] != o.bits_[i];
    return n;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  static Mask from_bits(std::vector<std::uint8_t> bits) {
    Mask m;
    m.bits_ = std::move(bits);
    m.active_ = 0;
    for (auto b : m.bits_) m.active_ += b != 0;
    return m;
  }

  bool operator==(const Mask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::ptrdiff_t active_ = 0;
};

}  // namespace caafp::prune
