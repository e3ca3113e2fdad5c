#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dcs {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Seeded random stream. The engine is std::mt19937_64, which the standard
// pins bit-for-bit; the distributions are hand-rolled because the std::
// distribution objects are implementation-defined and would break replay
// of recorded traces across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(detail::splitmix64(seed)) {}

  // Independent named stream derived from (seed, tag, a, b).
  static Rng substream(std::uint64_t seed, std::string_view tag,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = detail::splitmix64(seed ^ detail::fnv1a(tag));
    s = detail::splitmix64(s ^ a);
    s = detail::splitmix64(s ^ b);
    return Rng(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1. Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi_exclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_exclusive - lo)));
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dcs
