#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "orseq/rng.hpp"

namespace orseq {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr std::size_t kNumReserved = 4;

/// Token <-> id map. Ids 0..3 are PAD, UNK, BOS, EOS; the rest are ordered
/// by descending corpus frequency (ties by first occurrence).
///
/// On disk: one token per line, line number == id, the first four lines
/// being the reserved tokens.
class Vocabulary {
 public:
  Vocabulary();

  /// Reserved block followed by `tokens` in order. Duplicates or reserved
  /// spellings in `tokens` are an error.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  /// `max_size` counts the reserved entries; 0 means unbounded.
  static Vocabulary build(std::istream& corpus, std::size_t max_size, std::size_t min_freq);
  static Vocabulary build_from_file(const std::string& path, std::size_t max_size,
                                    std::size_t min_freq);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Whitespace-split line to ids; unknown words become UNK. No BOS/EOS.
  std::vector<TokenId> encode(std::string_view line) const;
  /// Space-joined tokens; stops at the first EOS, skips PAD and BOS.
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

const std::vector<std::string>& reserved_tokens();

struct SentencePair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using Batch = std::vector<SentencePair>;

/// Line-aligned source/target text.
struct TextCorpus {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
};

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> split_tokens(std::string_view line);

/// Reads two line-aligned files. Mismatched line counts are an error.
TextCorpus read_parallel(const std::string& src_path, const std::string& tgt_path);

/// Numericalizes a corpus, dropping pairs with an empty side or with either
/// side longer than `max_len` tokens (0 disables the length filter).
std::vector<SentencePair> numericalize(const TextCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab, std::size_t max_len = 50);

/// Shuffles a copy of `pairs` with a stream derived from (seed, epoch) and
/// cuts it into consecutive chunks of `batch_size`; the last may be short.
std::vector<Batch> batch_iter(std::span<const SentencePair> pairs, std::size_t batch_size,
                              std::uint64_t seed, std::uint64_t epoch);

/// Portable Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

enum class SyntheticTask { Copy, Reverse, Cipher };

struct SyntheticSpec {
  std::size_t vocab_size = 20;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  SyntheticTask task = SyntheticTask::Copy;
  std::size_t pairs = 1000;
  double swap_prob = 0.1;  // cipher task only
  std::uint64_t seed = 1;

  /// `key = value` lines; '#' starts a comment. Keys: vocab_size, min_len,
  /// max_len, task (copy | reverse | cipher), pairs, swap_prob, seed.
  static SyntheticSpec parse(std::string_view text);
  static SyntheticSpec load(const std::string& path);
};

SyntheticTask parse_task(std::string_view name);

/// The substitution used by the cipher task. It depends only on the vocabulary
/// size, so corpora generated with different seeds share it.
std::vector<std::size_t> cipher_permutation(std::size_t vocab_size);

/// Generates pairs over the words "w0".."w{vocab_size-1}". Copy: target equals
/// source. Reverse: target is the reversed source. Cipher: each word is mapped
/// through cipher_permutation, then adjacent positions are swapped left to
/// right, each pair with probability swap_prob (a swapped pair is not
/// considered again).
TextCorpus gen_synthetic(const SyntheticSpec& spec);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

}  // namespace orseq
