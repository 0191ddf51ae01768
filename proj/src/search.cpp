#include "orseq/search.hpp"

namespace orseq {

std::vector<ModelHypothesis> beam_search(const ModelParams& params, std::span<const TokenId> src,
                                         std::size_t k, std::size_t max_len,
                                         const std::optional<GumbelConfig>& noise) {
  const ModelScorer scorer(params, src);
  return beam_search(scorer, k, max_len ? max_len : default_max_len(src.size()), noise);
}

std::vector<ModelHypothesis> force_decode(const ModelParams& params, std::span<const TokenId> src,
                                          std::size_t ref_len, std::size_t k,
                                          const std::optional<GumbelConfig>& noise) {
  const ModelScorer scorer(params, src);
  return force_decode(scorer, ref_len, k, noise);
}

std::vector<TokenId> translate(const ModelParams& params, std::span<const TokenId> src, std::size_t k,
                               std::size_t max_len) {
  auto hyps = beam_search(params, src, k, max_len);
  std::vector<TokenId> out = hyps.front().tokens;
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

double score_sequence(const ModelParams& params, std::span<const TokenId> src,
                      std::span<const TokenId> tokens) {
  const ModelScorer scorer(params, src);
  DecoderState state = scorer.initial();
  TokenId prev = kBos;
  double total = 0.0;
  for (TokenId t : tokens) {
    auto [next, logits] = scorer.step(state, prev);
    total += log_softmax(logits)[static_cast<std::size_t>(t)];
    state = std::move(next);
    prev = t;
  }
  return total;
}

}  // namespace orseq
