#pragma once

#include <cstddef>
#include <optional>

#include "orseq/data.hpp"
#include "orseq/rng.hpp"
#include "orseq/tensor.hpp"

namespace orseq {

/// Temperature plus the generator the noise is drawn from.
struct GumbelConfig {
  double tau = 0.5;
  Rng* rng = nullptr;
};

/// Clamp applied to u before the double log.
inline constexpr double kGumbelEpsilon = 1e-12;

/// eta = -log(-log u) for u clamped to [eps, 1 - eps].
double gumbel_from_uniform(double u);

/// Independent Gumbel(0, 1) draws, one per element of `shape`.
Tensor gumbel_noise(Rng& rng, const Shape& shape);

/// (o + eta) / tau for fresh noise eta. Throws if tau <= 0 or rng is null.
Tensor perturbed_logits(const Tensor& logits, const GumbelConfig& cfg);

/// softmax((o + eta) / tau).
Tensor perturb(const Tensor& logits, const GumbelConfig& cfg);

/// Index of the largest element; ties go to the lowest index.
std::size_t argmax(const Tensor& v);

/// Argmax of the perturbed distribution when `noise` is given, otherwise of
/// the plain distribution. Softmax is monotone, so the argmax is taken on the
/// (perturbed) logits directly.
TokenId word_oracle(const Tensor& logits, const std::optional<GumbelConfig>& noise = std::nullopt);

}  // namespace orseq
