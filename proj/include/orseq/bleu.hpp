#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "orseq/data.hpp"

namespace orseq {

inline constexpr std::size_t kMaxNgram = 4;

/// Counts of all n-grams (n = 1..4) of a token sequence.
class NGramProfile {
 public:
  explicit NGramProfile(std::span<const TokenId> tokens);

  const std::map<std::vector<TokenId>, std::size_t>& counts(std::size_t n) const { return counts_.at(n - 1); }
  /// max(0, len - n + 1)
  std::size_t total(std::size_t n) const { return totals_.at(n - 1); }
  /// Clipped matches of this profile's n-grams against `ref`.
  std::size_t matches(const NGramProfile& ref, std::size_t n) const;

 private:
  std::array<std::map<std::vector<TokenId>, std::size_t>, kMaxNgram> counts_;
  std::array<std::size_t, kMaxNgram> totals_{};
};

/// Matched and candidate n-gram counts plus lengths, summable over a corpus.
struct BleuStats {
  std::array<std::size_t, kMaxNgram> matches{};
  std::array<std::size_t, kMaxNgram> candidates{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref);

/// Smoothed sentence BLEU in [0, 1]: unigram precision unsmoothed, n >= 2
/// precisions (m + 1) / (c + 1), geometric mean times
/// BP = min(1, exp(1 - |ref| / |hyp|)). An empty hypothesis scores 0.
double sentence_bleu(std::span<const TokenId> hyp, std::span<const TokenId> ref);

/// Standard unsmoothed corpus BLEU over aggregated counts, in [0, 1].
/// Throws on a length mismatch between the lists.
double corpus_bleu(const std::vector<std::vector<TokenId>>& hyps,
                   const std::vector<std::vector<TokenId>>& refs);

/// Corpus BLEU from already aggregated statistics.
double bleu_from_stats(const BleuStats& stats);

}  // namespace orseq
