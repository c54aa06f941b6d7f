// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace macaw {

/// Seeded generator with distribution code written out by hand so that
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string state() const;
  void restore(std::string_view state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
/// splitmix64 finaliser; used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace macaw
