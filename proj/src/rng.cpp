#include "orseq/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace orseq {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (auto k : keys) h = mix64(h ^ mix64(k));
  return Rng(h);
}

double Rng::uniform(double low, double high) {
  if (!(low < high))
    throw std::invalid_argument("uniform: low (" + std::to_string(low) +
                                ") must be below high (" + std::to_string(high) + ")");
  const double v = low + (high - low) * uniform();
  // rounding can land exactly on high
  return v < high ? v : std::nextafter(high, low);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: n must be positive");
  // rejection sampling removes modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

}  // namespace orseq
