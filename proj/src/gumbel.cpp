#include "orseq/gumbel.hpp"

#include <algorithm>
#include <cmath>

#include "orseq/graph.hpp"

namespace orseq {

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kGumbelEpsilon, 1.0 - kGumbelEpsilon);
  return -std::log(-std::log(u));
}

Tensor gumbel_noise(Rng& rng, const Shape& shape) {
  Tensor eta(shape);
  for (auto& v : eta.values()) v = gumbel_from_uniform(rng.uniform());
  return eta;
}

Tensor perturbed_logits(const Tensor& logits, const GumbelConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw Error("gumbel: temperature must be positive");
  if (!cfg.rng) throw Error("gumbel: no random generator supplied");
  Tensor out = gumbel_noise(*cfg.rng, logits.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (logits[i] + out[i]) / cfg.tau;
  return out;
}

Tensor perturb(const Tensor& logits, const GumbelConfig& cfg) {
  return softmax(perturbed_logits(logits, cfg));
}

std::size_t argmax(const Tensor& v) {
  if (v.empty()) throw Error("argmax: empty input");
  const auto vals = v.values();
  return static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
}

TokenId word_oracle(const Tensor& logits, const std::optional<GumbelConfig>& noise) {
  if (noise) return static_cast<TokenId>(argmax(perturbed_logits(logits, *noise)));
  return static_cast<TokenId>(argmax(logits));
}

}  // namespace orseq
