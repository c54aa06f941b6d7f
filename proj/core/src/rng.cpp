// SPDX-License-Identifier: Apache-2.0
#include "macaw/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "macaw/error.hpp"

namespace macaw {

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw Error(Errc::BadLength, "uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; one draw per call keeps the stream position predictable.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(std::string_view state) {
  std::istringstream is{std::string(state)};
  is >> engine_;
  if (is.fail()) throw Error(Errc::CorruptPayload, "unreadable RNG state");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace macaw
