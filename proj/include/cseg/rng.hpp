#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace cseg {

// Deterministic 64-bit generator (splitmix64). Draws are hand-rolled so every
// stream is byte-reproducible regardless of platform or standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, n)
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // uniform in [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double next_range(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // standard normal via Box-Muller; caches the second draw
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over the tag, mixed into the root seed. One root seed plus a tag per
// consumer gives independent, reproducible streams.
inline uint64_t derive_seed(uint64_t root, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  Rng mix(root ^ h);
  return mix.next_u64();
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index) {
  Rng mix(derive_seed(root, tag) ^ (index * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL));
  return mix.next_u64();
}

}  // namespace cseg
