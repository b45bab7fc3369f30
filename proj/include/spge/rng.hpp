#pragma once

// Deterministic, splittable random streams. Each stream is a 64-bit key; a
// counter is hashed through the SplitMix64 finaliser to produce outputs, so
// streams can be derived by name or index without sharing state and every
// draw depends only on (key, counter). This keeps runs bit-reproducible for
// a fixed seed regardless of evaluation order or worker count.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace spge {

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  // Derives an independent stream from a label.
  Rng stream(std::string_view label) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the label bytes
    for (const char ch : label) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    return Rng(mix(key_ ^ h));
  }

  // Derives an independent stream from an index (minibatch step, sample id).
  Rng stream(std::uint64_t index) const {
    return Rng(mix(key_ + 0x9e3779b97f4a7c15ull * (index + 1)));
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // Uniform on (0, 1); never returns 0 so logs stay finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  // Standard normal draw via Box-Muller; always consumes two uniforms.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace spge
