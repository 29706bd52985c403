#include "caafp/arch.hpp"

#include <fstream>

#include "caafp/binio.hpp"

namespace caafp::nn {

void ArchitectureSpec::validate() const {
  if (timesteps < 1 || channels < 1 || num_classes < 2)
    throw ConfigError("architecture: timesteps/channels/classes out of range");
  if (conv_filters < 1 || kernel_size < 1 || pool_size < 1 || dense_units < 1)
    throw ConfigError("architecture: layer sizes must be positive");
  for (double d : {dropout_conv1, dropout_conv2, dropout_dense})
    if (d < 0.0 || d >= 1.0) throw ConfigError("architecture: dropout rate must be in [0,1)");
  if (conv1_len() < 1 || pool1_len() < 1 || conv2_len() < 1 || pool2_len() < 1)
    throw ConfigError("architecture: window too short for conv/pool stack");
}

Layout::Layout(const ArchitectureSpec& spec) : spec_(spec) {
  spec_.validate();
  auto add = [&](std::string name, std::vector<int> shape, bool prunable) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    slots_.push_back({std::move(name), std::move(shape), total_, n, prunable});
    total_ += n;
  };
  const int f = spec_.conv_filters;
  const int k = spec_.kernel_size;
  add("conv1.kernel", {k, spec_.channels, f}, true);
  add("conv1.bias", {f}, false);
  add("conv2.kernel", {k, f, f}, true);
  add("conv2.bias", {f}, false);
  add("dense.kernel", {spec_.flatten_size(), spec_.dense_units}, true);
  add("dense.bias", {spec_.dense_units}, false);
  add("head.kernel", {spec_.dense_units, spec_.num_classes}, true);
  add("head.bias", {spec_.num_classes}, false);

  for (const auto& s : slots_)
    if (s.prunable)
      for (std::size_t i = 0; i < s.size; ++i) prunable_.push_back(s.offset + i);
}

const TensorSlot& Layout::slot(std::string_view name) const {
  for (const auto& s : slots_)
    if (s.name == name) return s;
  throw ConfigError("layout: no tensor named '" + std::string(name) + "'");
}

std::span<double> ParamSet::slice(std::string_view name) {
  const TensorSlot& s = layout->slot(name);
  return {values.data() + s.offset, s.size};
}

std::span<const double> ParamSet::slice(std::string_view name) const {
  const TensorSlot& s = layout->slot(name);
  return {values.data() + s.offset, s.size};
}

ParamSet zeros_like(const LayoutPtr& layout) {
  return ParamSet{layout, std::vector<double>(layout->total_size(), 0.0)};
}

void dump_f32(const ParamSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  io::BinWriter w(os);
  for (double v : params.values) w.f32(static_cast<float>(v));
}

}  // namespace caafp::nn
