#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace caafp {

// Error categories map onto CLI exit codes: ConfigError -> 1, DataError and
// IoError -> 2. Everything else escaping to main is a bug.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent seed from a master seed plus context tags.
// Every stochastic decision in the library draws from a stream seeded this
// way, so runs are reproducible and checkpoints never need RNG state.
inline std::uint64_t seed_mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// Stream tags. Values are part of the reproducibility contract; do not renumber.
namespace seed_tag {
inline constexpr std::uint64_t init = 0x11;
inline constexpr std::uint64_t train = 0x22;
inline constexpr std::uint64_t sample = 0x33;
inline constexpr std::uint64_t cluster_probe = 0x44;
inline constexpr std::uint64_t score_probe = 0x55;
inline constexpr std::uint64_t finetune = 0x66;
inline constexpr std::uint64_t split = 0x77;
inline constexpr std::uint64_t scenario = 0x88;
inline constexpr std::uint64_t synth = 0x99;
}  // namespace seed_tag

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) {
  return Rng(splitmix64(seed ^ 0xd1b54a32d192ed03ULL));
}

// Top 53 bits -> [0,1). Hand-rolled instead of uniform_real_distribution so
// the stream does not depend on the standard library implementation.
inline double unit_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_double(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_double(rng);
}

// Box-Muller, one value per call.
inline double gaussian(Rng& rng) {
  double u1 = unit_double(rng);
  double u2 = unit_double(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::size_t bounded(Rng& rng, std::size_t n) {
  // Modulo bias is irrelevant at these ranges; determinism is what matters.
  return static_cast<std::size_t>(rng() % n);
}

// Fisher-Yates with explicit draws (std::shuffle leaves the swap sequence
// up to the implementation).
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = bounded(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace caafp
