#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vrbci {

// Deterministic random source. Distributions are implemented here instead of
// through std:: distribution objects so that streams are bit-reproducible
// across standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). Multiply-shift map; bias is O(n / 2^64).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one value per call (no cached spare, so
  // the stream position is a simple function of the call count).
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exp(1)
  double exponential() { return -std::log(1.0 - uniform()); }

 private:
  static constexpr double kTwoPi = 6.28318530717958647692;
  std::mt19937_64 gen_;
};

// Mixes stream labels (sweep point, repeat, worker id) into a base seed.
// Plain xor of small indices collides (a^b is symmetric), so labels are
// spread with odd multipliers and finished with a splitmix round.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t x = base ^ (a * 0x9E3779B97F4A7C15ULL) ^
                    ((b + 1) * 0xBF58476D1CE4E5B9ULL);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace vrbci
