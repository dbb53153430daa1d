#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rgrk {

// (seed, stream) pair identifying an independent reproducible random stream.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// xoshiro256++ (Blackman & Vigna), state seeded through splitmix64 so that any
// (seed, stream) pair, including zero, yields a well-mixed nonzero state.
// Integer path is exact, so sequences are identical on every platform.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(RngSpec spec = {}) {
    std::uint64_t sm = spec.seed + 0x9E3779B97F4A7C15ULL * (spec.stream + 1);
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4];
};

// Standard normal variates via Box-Muller on top of Xoshiro256pp. Pairs are
// generated together and the spare is cached, so draw order is deterministic.
class NormalGenerator {
 public:
  explicit NormalGenerator(RngSpec spec = {}) : rng_(spec) {}
  explicit NormalGenerator(Xoshiro256pp rng) : rng_(rng) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.next_double_open();
    const double u2 = rng_.next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double uniform() { return rng_.next_double(); }

  Xoshiro256pp& engine() { return rng_; }

 private:
  Xoshiro256pp rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rgrk
