#include "orseq/schedule.hpp"

#include <cmath>

#include "orseq/tensor.hpp"

namespace orseq {

double truth_prob(const DecayConfig& cfg) {
  if (!(cfg.mu > 0.0)) throw Error("truth_prob: mu must be positive");
  return cfg.mu / (cfg.mu + std::exp(static_cast<double>(cfg.epoch) / cfg.mu));
}

TokenId sample_context(TokenId truth_word, TokenId oracle_word, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("sample_context: p outside [0, 1]");
  // always draw, so the stream position does not depend on p
  return rng.bernoulli(p) ? truth_word : oracle_word;
}

}  // namespace orseq
