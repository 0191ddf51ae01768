#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace orseq {

/// Deterministic random source.
///
/// The bit stream is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Conversions to reals and bounded integers are done here
/// rather than through <random> distributions (those are
/// implementation-defined), so a seed replays identically on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// A generator whose seed is a hash of `seed` and the given keys. Used to
  /// give every (epoch, sentence, purpose) its own independent stream.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on [low, high). Throws std::invalid_argument if low >= high.
  double uniform(double low, double high);

  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace orseq
