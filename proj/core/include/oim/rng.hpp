#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "oim/common.hpp"

namespace oim {

/// Role tags used when deriving child seeds, so that independent random
/// streams (payload, channel taps, noise, ...) never alias each other.
enum class SeedRole : std::uint64_t {
  payload = 1,
  channel_taps = 2,
  cfo_sign = 3,
  timing_offset = 4,
  noise = 5,
  phase_noise = 6,
  ra_interleaver = 7,
  user_interleaver = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Hash-combines a master seed with an arbitrary list of tags
/// (grid point index, trial index, user index, role, ...).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a) {
  return derive_seed(master, {a});
}
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(master, {a, b});
}
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return derive_seed(master, {a, b, c});
}

/// Seeded random source. Gaussian variates come from a hand-rolled
/// Box-Muller transform so that sequences are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform integer in [lo, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

  bool bit() { return (engine_() >> 63) != 0; }

  /// Standard normal.
  double gaussian();

  /// Complex Gaussian with total variance `variance`
  /// (each real component has variance/2).
  cplx complex_gaussian(double variance);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace oim
