#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cubesim {

// Every stochastic path in the simulator draws from these two generators so a
// seed reproduces a run bit-for-bit on any conforming standard library:
//
//   * SplitMix64 (Steele, Lea, Flood 2014) for stateless hashing of
//     (seed, channel, time) tuples.
//   * std::mt19937_64, whose output sequence is fixed by the C++ standard.
//
// Normal deviates are computed here from raw engine output (Box-Muller for
// hashed pairs, the Marsaglia polar method for streams).
// std::normal_distribution is not used because its algorithm is
// implementation-defined.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull));
}

/// Maps 64 random bits to a double in (0, 1).
inline double unit_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal pair from two uniforms.
inline double box_muller(std::uint64_t u_bits, std::uint64_t v_bits) noexcept {
  const double u = unit_open(u_bits);
  const double v = unit_open(v_bits);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = static_cast<double>(engine_() >> 11) * 0x1.0p-52 - 1.0;
      v = static_cast<double>(engine_() >> 11) * 0x1.0p-52 - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double uniform() { return unit_open(engine_()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cubesim
