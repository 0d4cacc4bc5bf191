#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace sparse2d {

// splitmix64 finalizer; full-avalanche mix of a 64-bit word.
constexpr uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Folds a tuple of key fields into one 64-bit stream key.
constexpr uint64_t make_key(std::initializer_list<uint64_t> fields) {
  uint64_t h = 0x8A5CD789635D2DFFULL;
  for (uint64_t f : fields) {
    h = mix64(h + 0x9E3779B97F4A7C15ULL + f);
  }
  return h;
}

// Counter-based generator: draw i of stream k is mix64(k + i*gamma),
// so any draw is addressable independently of execution order.
class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}
  CounterRng(std::initializer_list<uint64_t> fields) : key_(make_key(fields)) {}

  uint64_t next_u64() {
    uint64_t z = key_ + (++ctr_) * 0x9E3779B97F4A7C15ULL;
    return mix64(z);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform_pos();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double next_uniform_range(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

 private:
  uint64_t key_;
  uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sparse2d
