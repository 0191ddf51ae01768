#pragma once

#include <cstdint>

#include "orseq/data.hpp"
#include "orseq/rng.hpp"

namespace orseq {

struct DecayConfig {
  double mu = 12.0;
  std::uint64_t epoch = 0;  // counted from 0
};

/// Probability of feeding the ground-truth word in epoch e:
/// mu / (mu + exp(e / mu)). Strictly decreasing in e; mu must be positive.
double truth_prob(const DecayConfig& cfg);

/// One Bernoulli(p) draw: the ground-truth word with probability p, the
/// oracle word otherwise. p must lie in [0, 1].
TokenId sample_context(TokenId truth_word, TokenId oracle_word, double p, Rng& rng);

}  // namespace orseq
