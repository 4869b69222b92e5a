#pragma once

#include <cstdint>
#include <random>

namespace microrl {

// SplitMix64 finalizer; used to derive independent stream seeds from a
// (master seed, counter...) tuple.
constexpr std::uint64_t mixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t deriveSeed(std::uint64_t master, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
  return mixSeed(mixSeed(mixSeed(mixSeed(master) ^ a) ^ b) ^ c);
}

/// Deterministic random source. Streams are addressed by counters so that
/// every episode, worker and purpose gets its own reproducible sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    return Rng(deriveSeed(master, a, b, c));
  }

  std::uint64_t seed() const {
    return seed_;
  }

  std::uint64_t next() {
    return engine_();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  double normal() {
    return normal_(engine_);
  }

  bool bernoulli(double p) {
    return uniform() < p;
  }

  std::mt19937_64& engine() {
    return engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace microrl
