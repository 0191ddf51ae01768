#pragma once

#include <algorithm>
#include <concepts>
#include <limits>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "orseq/data.hpp"
#include "orseq/graph.hpp"
#include "orseq/gumbel.hpp"
#include "orseq/model.hpp"

namespace orseq {

/// Anything that scores next tokens from a recurrent state.
template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, TokenId t) {
  { m.initial() } -> std::convertible_to<typename M::State>;
  { m.step(s, t) } -> std::same_as<std::pair<typename M::State, Tensor>>;
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
};

template <typename State>
struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;  // sum of per-step log-probabilities
  State state{};
  bool finished = false;
};

/// The encoder-decoder seen as a StepModel for one source sentence.
class ModelScorer {
 public:
  using State = DecoderState;

  ModelScorer(const ModelParams& params, std::span<const TokenId> src)
      : params_(params), annotations_(encode(params, src)) {}

  DecoderState initial() const { return initial_state(params_, annotations_); }
  std::pair<DecoderState, Tensor> step(const DecoderState& state, TokenId prev) const {
    auto r = decoder_step(params_, prev, state, annotations_);
    return {std::move(r.state), std::move(r.logits)};
  }
  std::size_t vocab_size() const { return params_.dims.tgt_vocab; }
  const EncoderAnnotations& annotations() const { return annotations_; }

 private:
  const ModelParams& params_;
  EncoderAnnotations annotations_;
};

namespace detail {

struct Expansion {
  double score;
  std::size_t beam;
  TokenId token;
};

/// Shared core of beam search and force decoding.
///
/// Each step expands every live hypothesis by its best `width` allowed
/// tokens and keeps the global best `width` expansions (ties: lower beam
/// index, then lower token id). PAD and BOS are never allowed. With
/// `forced_len` = L, EOS is disallowed for steps 1..L and is the only allowed
/// token at step L+1, and `width` stays k throughout. Otherwise a hypothesis
/// finishes on EOS, `width` shrinks by the number finished, and EOS is the
/// only allowed token at step `max_len`.
template <StepModel M>
std::vector<Hypothesis<typename M::State>> search(const M& model, std::size_t k, std::size_t max_len,
                                                  const std::optional<GumbelConfig>& noise,
                                                  std::optional<std::size_t> forced_len) {
  using Hyp = Hypothesis<typename M::State>;
  std::vector<Hyp> live(1);
  live[0].state = model.initial();
  std::vector<Hyp> finished;
  const std::size_t last_step = forced_len ? *forced_len + 1 : max_len;

  for (std::size_t step = 1; step <= last_step && !live.empty(); ++step) {
    const std::size_t width = forced_len ? k : k - finished.size();
    const bool eos_only = step == last_step;
    const bool eos_banned = forced_len.has_value() && !eos_only;

    std::vector<std::pair<typename M::State, Tensor>> next(live.size());
    std::vector<Expansion> pool;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const TokenId prev = live[b].tokens.empty() ? kBos : live[b].tokens.back();
      next[b] = model.step(live[b].state, prev);
      const Tensor& logits = next[b].second;
      const Tensor logp = noise ? log_softmax(perturbed_logits(logits, *noise)) : log_softmax(logits);

      std::vector<Expansion> mine;
      for (std::size_t t = 0; t < logp.size(); ++t) {
        const auto tok = static_cast<TokenId>(t);
        if (tok == kPad || tok == kBos) continue;
        if (eos_only && tok != kEos) continue;
        if (eos_banned && tok == kEos) continue;
        mine.push_back({live[b].score + logp[t], b, tok});
      }
      const std::size_t keep = std::min(width, mine.size());
      std::partial_sort(mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(keep), mine.end(),
                        [](const Expansion& x, const Expansion& y) {
                          return x.score != y.score ? x.score > y.score : x.token < y.token;
                        });
      pool.insert(pool.end(), mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Expansion& x, const Expansion& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.beam != y.beam) return x.beam < y.beam;
      return x.token < y.token;
    });
    if (pool.size() > width) pool.resize(width);

    std::vector<Hyp> survivors;
    for (const Expansion& e : pool) {
      Hyp h;
      h.tokens = live[e.beam].tokens;
      h.tokens.push_back(e.token);
      h.score = e.score;
      h.state = next[e.beam].first;
      h.finished = e.token == kEos;
      (h.finished ? finished : survivors).push_back(std::move(h));
    }
    live = std::move(survivors);
    if (!forced_len && finished.size() >= k) break;
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
  return finished;
}

}  // namespace detail

/// Plain beam search. Returns up to k finished hypotheses (each ending in
/// EOS) sorted by score, best first. With `noise`, step distributions are
/// Gumbel-perturbed. max_len 0 means 2 * |src| + 5 for the model overload.
template <StepModel M>
std::vector<Hypothesis<typename M::State>> beam_search(const M& model, std::size_t k, std::size_t max_len,
                                                       const std::optional<GumbelConfig>& noise = std::nullopt) {
  if (k == 0) throw Error("beam_search: beam size must be at least 1");
  if (max_len == 0) throw Error("beam_search: max_len must be at least 1");
  return detail::search(model, k, max_len, noise, std::nullopt);
}

/// Length-constrained beam search: every returned hypothesis has exactly
/// L tokens followed by EOS. Returns min(k, number of EOS-free sequences)
/// hypotheses, best first.
template <StepModel M>
std::vector<Hypothesis<typename M::State>> force_decode(const M& model, std::size_t ref_len, std::size_t k,
                                                        const std::optional<GumbelConfig>& noise = std::nullopt) {
  if (ref_len == 0) throw Error("force_decode: reference length must be at least 1");
  if (k == 0) throw Error("force_decode: beam size must be at least 1");
  if (model.vocab_size() < kNumReserved + 2)
    throw Error("force_decode: target vocabulary needs at least two non-reserved tokens");
  return detail::search(model, k, ref_len, noise, ref_len);
}

/// Step-wise argmax over allowed tokens (PAD and BOS excluded), EOS forced at
/// step max_len.
template <StepModel M>
Hypothesis<typename M::State> greedy_decode(const M& model, std::size_t max_len) {
  Hypothesis<typename M::State> h;
  h.state = model.initial();
  for (std::size_t step = 1; step <= max_len; ++step) {
    auto [state, logits] = model.step(h.state, h.tokens.empty() ? kBos : h.tokens.back());
    const Tensor logp = log_softmax(logits);
    TokenId best = kEos;
    if (step < max_len) {
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < logp.size(); ++t) {
        const auto tok = static_cast<TokenId>(t);
        if (tok == kPad || tok == kBos) continue;
        if (logp[t] > best_score) {
          best_score = logp[t];
          best = tok;
        }
      }
    }
    h.tokens.push_back(best);
    h.score += logp[static_cast<std::size_t>(best)];
    h.state = std::move(state);
    if (best == kEos) break;
  }
  h.finished = true;
  return h;
}

using ModelHypothesis = Hypothesis<DecoderState>;

inline std::size_t default_max_len(std::size_t src_len) { return 2 * src_len + 5; }

std::vector<ModelHypothesis> beam_search(const ModelParams& params, std::span<const TokenId> src,
                                         std::size_t k, std::size_t max_len = 0,
                                         const std::optional<GumbelConfig>& noise = std::nullopt);

std::vector<ModelHypothesis> force_decode(const ModelParams& params, std::span<const TokenId> src,
                                          std::size_t ref_len, std::size_t k,
                                          const std::optional<GumbelConfig>& noise = std::nullopt);

/// Tokens of the best hypothesis without the trailing EOS.
std::vector<TokenId> translate(const ModelParams& params, std::span<const TokenId> src, std::size_t k,
                               std::size_t max_len = 0);

/// Sum of log P_j[token] when teacher-forcing `tokens` (which should end in
/// EOS) through the model.
double score_sequence(const ModelParams& params, std::span<const TokenId> src,
                      std::span<const TokenId> tokens);

}  // namespace orseq
