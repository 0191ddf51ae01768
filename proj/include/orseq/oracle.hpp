#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orseq/data.hpp"
#include "orseq/gumbel.hpp"
#include "orseq/model.hpp"

namespace orseq {

/// Which oracle supplies the substitute context words during training.
enum class OracleMode { None, Word, WordNoise, Sentence, SentenceNoise };

/// "none", "word", "word-noise", "sentence", "sentence-noise".
OracleMode parse_oracle_mode(std::string_view name);
std::string to_string(OracleMode mode);
bool uses_noise(OracleMode mode);
bool is_sentence_mode(OracleMode mode);
bool is_word_mode(OracleMode mode);

struct OracleSelection {
  OracleMode mode = OracleMode::None;
  /// Sentence modes only: the oracle sentence, exactly |reference| tokens.
  std::vector<TokenId> tokens;
};

struct OracleCandidate {
  std::vector<TokenId> tokens;  // without the final EOS
  double model_score = 0.0;
  double bleu = 0.0;
};

/// Force-decoded candidates and the index of the chosen one.
struct SentenceOracleResult {
  std::vector<OracleCandidate> candidates;  // beam order, best model score first
  std::size_t chosen = 0;

  OracleSelection selection(OracleMode mode) const { return {mode, candidates.at(chosen).tokens}; }
};

/// Force-decodes |reference| words with beam k (optionally Gumbel-perturbed),
/// rescores every candidate with smoothed sentence BLEU against `reference`
/// and picks the best. Ties: higher model score, then lower beam index.
/// Runs on parameter values only; no gradient or dropout is involved.
SentenceOracleResult sentence_oracle(const ModelParams& params, std::span<const TokenId> src,
                                     std::span<const TokenId> reference, std::size_t k,
                                     const std::optional<GumbelConfig>& noise = std::nullopt);

/// Index of the best candidate under the rule above. Candidates must be
/// non-empty.
std::size_t pick_oracle_candidate(const std::vector<OracleCandidate>& candidates);

}  // namespace orseq
