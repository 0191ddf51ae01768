#include "orseq/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "orseq/tensor.hpp"

namespace orseq {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> reserved = {"<pad>", "<unk>", "<s>", "</s>"};
  return reserved;
}

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) add(t);
}

void Vocabulary::add(const std::string& token) {
  if (!ids_.emplace(token, static_cast<TokenId>(tokens_.size())).second)
    throw Error("vocabulary: duplicate token '" + token + "'");
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocabulary Vocabulary::build(std::istream& corpus, std::size_t max_size, std::size_t min_freq) {
  struct Entry {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  std::size_t seen = 0;
  std::string line;
  while (std::getline(corpus, line)) {
    for (auto& tok : split_tokens(line)) {
      auto [it, inserted] = counts.try_emplace(std::move(tok));
      if (inserted) it->second.first_seen = seen++;
      ++it->second.count;
    }
  }
  if (counts.empty()) throw Error("build_vocab: corpus contains no tokens");

  std::vector<std::pair<std::string, Entry>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });

  Vocabulary v;
  for (const auto& [tok, entry] : ranked) {
    if (max_size && v.size() >= max_size) break;
    if (entry.count < min_freq) break;
    if (v.contains(tok)) continue;  // a reserved spelling in the corpus
    v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::build_from_file(const std::string& path, std::size_t max_size,
                                       std::size_t min_freq) {
  std::ifstream in(path);
  if (!in) throw Error("build_vocab: cannot read '" + path + "'");
  return build(in, max_size, min_freq);
}

Vocabulary Vocabulary::load(const std::string& path) {
  const auto lines = read_lines(path);
  const auto& reserved = reserved_tokens();
  if (lines.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), lines.begin()))
    throw Error("vocabulary '" + path + "': missing reserved header");
  return from_tokens(std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(reserved.size()),
                                              lines.end()));
}

void Vocabulary::save(const std::string& path) const { write_lines(path, tokens_); }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

std::vector<TokenId> Vocabulary::encode(std::string_view line) const {
  std::vector<TokenId> out;
  for (const auto& tok : split_tokens(line)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

// ---- files ------------------------------------------------------------------

std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

TextCorpus read_parallel(const std::string& src_path, const std::string& tgt_path) {
  TextCorpus c{read_lines(src_path), read_lines(tgt_path)};
  if (c.src.size() != c.tgt.size())
    throw Error("parallel corpus: '" + src_path + "' has " + std::to_string(c.src.size()) +
                " lines but '" + tgt_path + "' has " + std::to_string(c.tgt.size()));
  return c;
}

std::vector<SentencePair> numericalize(const TextCorpus& corpus, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab, std::size_t max_len) {
  if (corpus.src.size() != corpus.tgt.size()) throw Error("numericalize: unaligned corpus");
  std::vector<SentencePair> out;
  out.reserve(corpus.src.size());
  for (std::size_t i = 0; i < corpus.src.size(); ++i) {
    SentencePair p{src_vocab.encode(corpus.src[i]), tgt_vocab.encode(corpus.tgt[i])};
    if (p.src.empty() || p.tgt.empty()) continue;
    if (max_len && (p.src.size() > max_len || p.tgt.size() > max_len)) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<Batch> batch_iter(std::span<const SentencePair> pairs, std::size_t batch_size,
                              std::uint64_t seed, std::uint64_t epoch) {
  if (pairs.empty()) throw Error("batch_iter: no sentence pairs");
  if (batch_size == 0) throw Error("batch_iter: batch size must be positive");
  Rng rng = Rng::derive(seed, {0x5348554646ULL /* "SHUFF" */, epoch});
  const auto order = shuffled_indices(pairs.size(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) b.push_back(pairs[order[i]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---- synthetic tasks --------------------------------------------------------

SyntheticTask parse_task(std::string_view name) {
  if (name == "copy") return SyntheticTask::Copy;
  if (name == "reverse") return SyntheticTask::Reverse;
  if (name == "cipher") return SyntheticTask::Cipher;
  throw Error("unknown synthetic task '" + std::string(name) + "' (copy, reverse, cipher)");
}

SyntheticSpec SyntheticSpec::parse(std::string_view text) {
  SyntheticSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    const auto key_tokens = split_tokens(line.substr(0, eq == std::string::npos ? line.size() : eq));
    if (key_tokens.empty()) continue;
    if (eq == std::string::npos || key_tokens.size() != 1)
      throw Error("synthetic spec line " + std::to_string(lineno) + ": expected key = value");
    const auto value_tokens = split_tokens(line.substr(eq + 1));
    if (value_tokens.size() != 1)
      throw Error("synthetic spec line " + std::to_string(lineno) + ": expected a single value");
    const std::string& key = key_tokens[0];
    const std::string& value = value_tokens[0];
    try {
      if (key == "vocab_size") spec.vocab_size = std::stoull(value);
      else if (key == "min_len") spec.min_len = std::stoull(value);
      else if (key == "max_len") spec.max_len = std::stoull(value);
      else if (key == "task") spec.task = parse_task(value);
      else if (key == "pairs") spec.pairs = std::stoull(value);
      else if (key == "swap_prob") spec.swap_prob = std::stod(value);
      else if (key == "seed") spec.seed = std::stoull(value);
      else throw Error("synthetic spec: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw Error("synthetic spec: bad value '" + value + "' for " + key);
    }
  }
  if (spec.vocab_size == 0 || spec.min_len == 0 || spec.min_len > spec.max_len)
    throw Error("synthetic spec: need vocab_size > 0 and 0 < min_len <= max_len");
  if (spec.swap_prob < 0.0 || spec.swap_prob > 1.0) throw Error("synthetic spec: swap_prob outside [0, 1]");
  return spec;
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read synthetic spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<std::size_t> cipher_permutation(std::size_t vocab_size) {
  Rng rng = Rng::derive(0x43495048ULL /* "CIPH" */, {vocab_size});
  return shuffled_indices(vocab_size, rng);
}

TextCorpus gen_synthetic(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  const auto perm = cipher_permutation(spec.vocab_size);
  auto word = [](std::size_t i) { return "w" + std::to_string(i); };
  auto join = [&](const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) s += ' ';
      s += word(ids[i]);
    }
    return s;
  };

  TextCorpus out;
  for (std::size_t n = 0; n < spec.pairs; ++n) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    std::vector<std::size_t> src(len);
    for (auto& w : src) w = rng.below(spec.vocab_size);
    std::vector<std::size_t> tgt = src;
    switch (spec.task) {
      case SyntheticTask::Copy:
        break;
      case SyntheticTask::Reverse:
        std::reverse(tgt.begin(), tgt.end());
        break;
      case SyntheticTask::Cipher:
        for (auto& w : tgt) w = perm[w];
        for (std::size_t i = 0; i + 1 < tgt.size(); ++i) {
          if (rng.bernoulli(spec.swap_prob)) {
            std::swap(tgt[i], tgt[i + 1]);
            ++i;
          }
        }
        break;
    }
    out.src.push_back(join(src));
    out.tgt.push_back(join(tgt));
  }
  return out;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace orseq
