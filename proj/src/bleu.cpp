#include "orseq/bleu.hpp"

#include <algorithm>
#include <cmath>

#include "orseq/tensor.hpp"

namespace orseq {

NGramProfile::NGramProfile(std::span<const TokenId> tokens) {
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    if (tokens.size() < n) continue;
    totals_[n - 1] = tokens.size() - n + 1;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
      ++counts_[n - 1][std::vector<TokenId>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                            tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
}

std::size_t NGramProfile::matches(const NGramProfile& ref, std::size_t n) const {
  std::size_t m = 0;
  const auto& theirs = ref.counts(n);
  for (const auto& [gram, count] : counts(n)) {
    if (auto it = theirs.find(gram); it != theirs.end()) m += std::min(count, it->second);
  }
  return m;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < kMaxNgram; ++n) {
    matches[n] += o.matches[n];
    candidates[n] += o.candidates[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  const NGramProfile h(hyp), r(ref);
  BleuStats s;
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    s.matches[n - 1] = h.matches(r, n);
    s.candidates[n - 1] = h.total(n);
  }
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  return s;
}

namespace {

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

double sentence_bleu(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const BleuStats s = bleu_stats(hyp, ref);
  if (s.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(s.matches[0]) / static_cast<double>(s.candidates[0]));
  for (std::size_t n = 1; n < kMaxNgram; ++n)
    log_sum += std::log((static_cast<double>(s.matches[n]) + 1.0) / (static_cast<double>(s.candidates[n]) + 1.0));
  return brevity_penalty(s.hyp_len, s.ref_len) * std::exp(log_sum / static_cast<double>(kMaxNgram));
}

double bleu_from_stats(const BleuStats& s) {
  if (s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxNgram; ++n) {
    if (s.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.candidates[n]));
  }
  return brevity_penalty(s.hyp_len, s.ref_len) * std::exp(log_sum / static_cast<double>(kMaxNgram));
}

double corpus_bleu(const std::vector<std::vector<TokenId>>& hyps,
                   const std::vector<std::vector<TokenId>>& refs) {
  if (hyps.size() != refs.size())
    throw Error("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses but " +
                std::to_string(refs.size()) + " references");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i]);
  return bleu_from_stats(total);
}

}  // namespace orseq
