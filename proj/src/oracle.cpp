#include "orseq/oracle.hpp"

#include "orseq/bleu.hpp"
#include "orseq/search.hpp"

namespace orseq {

OracleMode parse_oracle_mode(std::string_view name) {
  if (name == "none") return OracleMode::None;
  if (name == "word") return OracleMode::Word;
  if (name == "word-noise") return OracleMode::WordNoise;
  if (name == "sentence") return OracleMode::Sentence;
  if (name == "sentence-noise") return OracleMode::SentenceNoise;
  throw Error("unknown oracle mode '" + std::string(name) +
              "' (none, word, word-noise, sentence, sentence-noise)");
}

std::string to_string(OracleMode mode) {
  switch (mode) {
    case OracleMode::None: return "none";
    case OracleMode::Word: return "word";
    case OracleMode::WordNoise: return "word-noise";
    case OracleMode::Sentence: return "sentence";
    case OracleMode::SentenceNoise: return "sentence-noise";
  }
  return "none";
}

bool uses_noise(OracleMode mode) { return mode == OracleMode::WordNoise || mode == OracleMode::SentenceNoise; }
bool is_sentence_mode(OracleMode mode) { return mode == OracleMode::Sentence || mode == OracleMode::SentenceNoise; }
bool is_word_mode(OracleMode mode) { return mode == OracleMode::Word || mode == OracleMode::WordNoise; }

std::size_t pick_oracle_candidate(const std::vector<OracleCandidate>& candidates) {
  if (candidates.empty()) throw Error("sentence_oracle: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = candidates[best];
    if (c.bleu > b.bleu || (c.bleu == b.bleu && c.model_score > b.model_score)) best = i;
  }
  return best;
}

SentenceOracleResult sentence_oracle(const ModelParams& params, std::span<const TokenId> src,
                                     std::span<const TokenId> reference, std::size_t k,
                                     const std::optional<GumbelConfig>& noise) {
  if (reference.empty()) throw Error("sentence_oracle: empty reference");
  SentenceOracleResult result;
  for (auto& h : force_decode(params, src, reference.size(), k, noise)) {
    OracleCandidate c;
    c.tokens.assign(h.tokens.begin(), h.tokens.end() - 1);  // drop EOS
    c.model_score = h.score;
    c.bleu = sentence_bleu(c.tokens, reference);
    result.candidates.push_back(std::move(c));
  }
  result.chosen = pick_oracle_candidate(result.candidates);
  return result;
}

}  // namespace orseq
