#pragma once
// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the graph or model code: the reference model is written with
// plain loops so it can be compared against the library value-for-value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "orseq/bleu.hpp"
#include "orseq/data.hpp"
#include "orseq/model.hpp"
#include "orseq/rng.hpp"
#include "orseq/search.hpp"

namespace orseq::testing {

using Vec = std::vector<double>;

inline ModelDims small_dims(std::size_t vs = 9, std::size_t vt = 8, std::size_t e = 4, std::size_t h = 3) {
  return ModelDims{vs, vt, e, h};
}

inline ModelParams random_model(std::uint64_t seed, const ModelDims& dims, double scale = 0.1) {
  Rng rng(seed);
  return init_params(rng, dims, scale);
}

/// Ids drawn from the non-reserved range [4, vocab).
inline std::vector<TokenId> random_tokens(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<TokenId> out(len);
  for (auto& t : out) t = static_cast<TokenId>(kNumReserved + rng.below(vocab - kNumReserved));
  return out;
}

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// ---- scalar reference model ------------------------------------------------

inline Vec ref_matvec(const Tensor& w, const Vec& x) {
  Vec y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) y[r] += w.at(r, c) * x[c];
  return y;
}

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec ref_row(const Tensor& m, TokenId r) {
  Vec out(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = m.at(static_cast<std::size_t>(r), c);
  return out;
}

inline Vec ref_gru(const GruParams& cell, const Vec& x, const Vec& h) {
  const std::size_t n = h.size();
  Vec a = ref_matvec(cell.input_w, x);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += cell.bias[i];
  Vec z(n), r(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double uz = 0.0, ur = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      uz += cell.gates_u.at(i, k) * h[k];
      ur += cell.gates_u.at(n + i, k) * h[k];
    }
    z[i] = ref_sigmoid(a[i] + uz);
    r[i] = ref_sigmoid(a[n + i] + ur);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double uc = 0.0;
    for (std::size_t k = 0; k < n; ++k) uc += cell.cand_u.at(i, k) * r[k] * h[k];
    const double cand = std::tanh(a[2 * n + i] + uc);
    out[i] = h[i] + z[i] * (cand - h[i]);
  }
  return out;
}

struct RefAnnotations {
  std::vector<Vec> h;  // per position, [forward; backward]
};

inline RefAnnotations ref_encode(const ModelParams& p, const std::vector<TokenId>& src) {
  const std::size_t n = src.size(), hd = p.dims.hidden;
  std::vector<Vec> fwd(n), bwd(n);
  Vec h(hd, 0.0);
  for (std::size_t i = 0; i < n; ++i) h = fwd[i] = ref_gru(p.enc_fwd, ref_row(p.src_embed, src[i]), h);
  h.assign(hd, 0.0);
  for (std::size_t i = n; i-- > 0;) h = bwd[i] = ref_gru(p.enc_bwd, ref_row(p.src_embed, src[i]), h);
  RefAnnotations a;
  for (std::size_t i = 0; i < n; ++i) {
    Vec row = fwd[i];
    row.insert(row.end(), bwd[i].begin(), bwd[i].end());
    a.h.push_back(row);
  }
  return a;
}

inline Vec ref_initial_state(const ModelParams& p, const RefAnnotations& a) {
  Vec mean(2 * p.dims.hidden, 0.0);
  for (const auto& row : a.h)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k] / static_cast<double>(a.h.size());
  Vec s = ref_matvec(p.init_w, mean);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::tanh(s[k] + p.init_b[k]);
  return s;
}

struct RefAttention {
  Vec alpha;
  Vec context;
};

inline RefAttention ref_attention(const ModelParams& p, const Vec& query, const RefAnnotations& a) {
  const Vec wq = ref_matvec(p.att_w, query);
  Vec scores;
  for (const auto& h : a.h) {
    const Vec uh = ref_matvec(p.att_u, h);
    double e = 0.0;
    for (std::size_t k = 0; k < wq.size(); ++k) e += p.att_v[k] * std::tanh(wq[k] + uh[k]);
    scores.push_back(e);
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  RefAttention r;
  r.context.assign(a.h[0].size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.alpha.push_back(std::exp(scores[i] - mx) / z);
    for (std::size_t k = 0; k < r.context.size(); ++k) r.context[k] += r.alpha[i] * a.h[i][k];
  }
  return r;
}

struct RefStep {
  Vec s_tilde;
  Vec s;
  Vec logits;
};

inline RefStep ref_step(const ModelParams& p, TokenId y_prev, const Vec& s_prev, const RefAnnotations& a) {
  RefStep r;
  const Vec e = ref_row(p.tgt_embed, y_prev);
  r.s_tilde = ref_gru(p.dec_gru1, e, s_prev);
  const auto att = ref_attention(p, r.s_tilde, a);
  r.s = ref_gru(p.dec_gru2, att.context, r.s_tilde);
  Vec in = e;
  in.insert(in.end(), att.context.begin(), att.context.end());
  in.insert(in.end(), r.s.begin(), r.s.end());
  Vec t = ref_matvec(p.readout_w, in);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::tanh(t[k] + p.readout_b[k]);
  r.logits = ref_matvec(p.out_w, t);
  return r;
}

inline double ref_log_prob(const Vec& logits, TokenId tok) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return logits[static_cast<std::size_t>(tok)] - mx - std::log(z);
}

/// -sum log P(target) when feeding BOS then `contexts` (|tgt| tokens; the
/// ground truth for teacher forcing); targets are tgt then EOS.
inline double ref_loss(const ModelParams& p, const SentencePair& pair, const std::vector<TokenId>& contexts) {
  const auto a = ref_encode(p, pair.src);
  Vec s = ref_initial_state(p, a);
  double loss = 0.0;
  TokenId prev = kBos;
  for (std::size_t j = 0; j <= pair.tgt.size(); ++j) {
    const auto step = ref_step(p, prev, s, a);
    loss -= ref_log_prob(step.logits, j < pair.tgt.size() ? pair.tgt[j] : kEos);
    s = step.s;
    if (j < pair.tgt.size()) prev = contexts[j];
  }
  return loss;
}

// ---- brute-force BLEU --------------------------------------------------------

struct BruteCounts {
  std::size_t matches[4] = {0, 0, 0, 0};
  std::size_t candidates[4] = {0, 0, 0, 0};
};

inline bool same_ngram(const std::vector<TokenId>& a, std::size_t i, const std::vector<TokenId>& b, std::size_t j,
                       std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

/// Clipped n-gram matches by position scanning, no maps.
inline BruteCounts brute_counts(const std::vector<TokenId>& hyp, const std::vector<TokenId>& ref) {
  BruteCounts c;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) continue;
    c.candidates[n - 1] = hyp.size() - n + 1;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      bool seen = false;
      for (std::size_t j = 0; j < i && !seen; ++j) seen = same_ngram(hyp, j, hyp, i, n);
      if (seen) continue;
      std::size_t in_hyp = 0, in_ref = 0;
      for (std::size_t j = 0; j + n <= hyp.size(); ++j) in_hyp += same_ngram(hyp, j, hyp, i, n);
      for (std::size_t j = 0; j + n <= ref.size(); ++j) in_ref += same_ngram(ref, j, hyp, i, n);
      c.matches[n - 1] += std::min(in_hyp, in_ref);
    }
  }
  return c;
}

inline double brute_sentence_bleu(const std::vector<TokenId>& hyp, const std::vector<TokenId>& ref) {
  if (hyp.empty()) return 0.0;
  const auto c = brute_counts(hyp, ref);
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    const double m = static_cast<double>(c.matches[n]), k = static_cast<double>(c.candidates[n]);
    const double prec = n == 0 ? m / k : (m + 1.0) / (k + 1.0);
    if (prec == 0.0) return 0.0;
    log_sum += std::log(prec);
  }
  const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size())));
  return bp * std::exp(log_sum / 4.0);
}

inline double brute_corpus_bleu(const std::vector<std::vector<TokenId>>& hyps,
                                const std::vector<std::vector<TokenId>>& refs) {
  double m[4] = {0, 0, 0, 0}, k[4] = {0, 0, 0, 0}, h = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto c = brute_counts(hyps[i], refs[i]);
    for (int n = 0; n < 4; ++n) {
      m[n] += static_cast<double>(c.matches[n]);
      k[n] += static_cast<double>(c.candidates[n]);
    }
    h += static_cast<double>(hyps[i].size());
    r += static_cast<double>(refs[i].size());
  }
  if (h == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (k[n] == 0 || m[n] == 0) return 0.0;
    log_sum += std::log(m[n] / k[n]);
  }
  return std::min(1.0, std::exp(1.0 - r / h)) * std::exp(log_sum / 4.0);
}

// ---- exhaustive search oracle ------------------------------------------------

struct Scored {
  std::vector<TokenId> tokens;
  double score;
};

/// Every length-`len` sequence over the tokens allowed before EOS (everything
/// except PAD, BOS and EOS), scored by summing step log-probabilities. With
/// `with_eos` the score also includes the closing EOS.
template <StepModel M>
std::vector<Scored> enumerate_sequences(const M& model, std::size_t len, bool with_eos = false) {
  std::vector<TokenId> allowed;
  for (std::size_t t = 0; t < model.vocab_size(); ++t) {
    const auto tok = static_cast<TokenId>(t);
    if (tok != kPad && tok != kBos && tok != kEos) allowed.push_back(tok);
  }
  std::vector<Scored> out;
  std::function<void(const typename M::State&, std::vector<TokenId>&, double)> rec =
      [&](const typename M::State& state, std::vector<TokenId>& prefix, double score) {
        if (prefix.size() == len) {
          if (with_eos) {
            const auto logits = model.step(state, prefix.empty() ? kBos : prefix.back()).second;
            score += log_softmax(logits)[static_cast<std::size_t>(kEos)];
          }
          out.push_back({prefix, score});
          return;
        }
        auto [next, logits] = model.step(state, prefix.empty() ? kBos : prefix.back());
        const Tensor logp = log_softmax(logits);
        for (TokenId t : allowed) {
          prefix.push_back(t);
          rec(next, prefix, score + logp[static_cast<std::size_t>(t)]);
          prefix.pop_back();
        }
      };
  std::vector<TokenId> prefix;
  rec(model.initial(), prefix, 0.0);
  std::stable_sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return out;
}

// ---- table-driven step model -------------------------------------------------

/// Next-token logits looked up from the prefix generated so far.
struct TableModel {
  using State = std::vector<TokenId>;
  std::size_t vocab = 7;
  std::function<Tensor(const std::vector<TokenId>&)> table;

  State initial() const { return {}; }
  std::pair<State, Tensor> step(const State& s, TokenId prev) const {
    State next = s;
    if (prev != kBos) next.push_back(prev);
    return {next, table(next)};
  }
  std::size_t vocab_size() const { return vocab; }
};

// ---- temp files --------------------------------------------------------------

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / ("orseq-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace orseq::testing
