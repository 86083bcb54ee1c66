#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace urb {

// Deterministic random source with hierarchical substreams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard; the uniform/normal/exponential transforms are hand-rolled because
// std::*_distribution algorithms are implementation-defined and would break
// the bitwise reproducibility guarantees. Substreams are derived by SplitMix64
// key mixing, so every (example, attack, restart) or (epoch, step, slot) can
// own an independent stream whose values do not depend on thread count or
// traversal order.
class Rng {
 public:
  static Rng seeded(std::uint64_t seed) { return Rng(splitmix64(seed)); }

  Rng fork(std::uint64_t tag) const {
    return Rng(splitmix64(key_ + 0x9E3779B97F4A7C15ull * (tag + 1)));
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return eng_(); }

  // In [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive bounds, unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    std::uint64_t range = hi - lo + 1;
    if (range == 0) return next_u64();  // full 64-bit range
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + x % range;
  }

  // Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(1.0 - uniform01()); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  // FNV-1a, for naming top-level stream domains by string tag.
  static constexpr std::uint64_t tag(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  explicit Rng(std::uint64_t key) : key_(key), eng_(key) {}

  std::uint64_t key_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace urb
