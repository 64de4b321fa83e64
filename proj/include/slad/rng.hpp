#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include "slad/tensor.hpp"

namespace slad {

/// Seedable, splittable random stream. The bit generator is SplitMix64;
/// `split` derives statistically independent child streams from a key, so
/// any consumer can be addressed as a pure function of (seed, path).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  Rng split(std::uint64_t key) const { return Rng(mix(state_ ^ mix(key + 0x632be59bd9b4e019ULL))); }
  Rng split(std::string_view name) const { return split(hash_name(name)); }

  std::uint64_t state() const { return state_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }
  int uniform_int(int lo, int hi_inclusive) { return std::uniform_int_distribution<int>(lo, hi_inclusive)(*this); }
  double normal() { return normal_(*this); }

  /// rows x cols tensor of independent standard normals.
  Tensor normal_tensor(std::size_t rows, std::size_t cols);

  static std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Tensor Rng::normal_tensor(std::size_t rows, std::size_t cols) {
  Tensor out({rows, cols}, 0.0);
  for (auto& v : out.values()) v = normal();
  return out;
}

}  // namespace slad
