// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orseq/gradcheck.hpp"
#include "orseq/gumbel.hpp"
#include "orseq/oracle.hpp"
#include "orseq/schedule.hpp"
#include "orseq/search.hpp"
#include "orseq/trainer.hpp"
#include "support.hpp"

using namespace orseq;
using namespace orseq::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---- gradient -----------------------------------------------------------------

Outcome gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(11);
  ModelParams p = init_params(rng, {9, 8, 4, 3}, 0.5);
  ModelParams grads = ModelParams::zeros(p.dims);
  const std::vector<SentencePair> batch{{{4, 5, 6}, {7, 4}}, {{8, 4}, {5, 6, 7}}};
  // Realized contexts are fixed (as after sampling) so the loss is a smooth
  // function of the parameters; dropout masks come from a fixed stream.
  const std::vector<TokenId> ctx0{5, 7}, ctx1{4, 4, 6};
  auto loss = [&](bool backward) {
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      StepLossOptions opts;
      opts.mode = OracleMode::SentenceNoise;
      opts.forced_contexts = i == 0 ? &ctx0 : &ctx1;
      opts.dropout = 0.3;
      SentenceRngs rngs = SentenceRngs::derive(5, 0, 0, i);
      total += step_loss(p, backward ? &grads : nullptr, batch[i], opts, rngs).loss;
    }
    return total;
  };
  std::vector<ParamRef> refs;
  auto ps = p.named();
  auto gs = grads.named();
  for (std::size_t k = 0; k < ps.size(); ++k) refs.push_back({ps[k].first, ps[k].second, gs[k].second});
  const auto report = check_gradients(refs, loss, 1e-5);
  const double t = seconds_since(start);
  return {report.max_rel_error < 1e-6 && t < 60.0,
          fmt("max rel error %.3g over %zu entries (worst %s), %.1fs", report.max_rel_error, report.checked, report.worst.c_str(), t)};
}

// ---- Gumbel-Max ---------------------------------------------------------------

Outcome gumbel_law() {
  const auto start = std::chrono::steady_clock::now();
  const Tensor logits = Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)});
  Rng rng(2024);
  const GumbelConfig cfg{1.0, &rng};
  std::vector<double> freq(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[argmax(perturbed_logits(logits, cfg))] += 1.0 / n;
  const double want[3] = {1.0 / 6, 1.0 / 3, 1.0 / 2};
  double worst = 0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(freq[i] - want[i]));
  const double t = seconds_since(start);
  return {worst <= 0.01 && t < 10.0,
          fmt("freqs %.4f %.4f %.4f, max deviation %.4f, %.2fs", freq[0], freq[1], freq[2], worst, t)};
}

// ---- decay --------------------------------------------------------------------

Outcome decay() {
  const double e0 = truth_prob({12.0, 0}), e12 = truth_prob({12.0, 12});
  const double d0 = std::abs(e0 - 12.0 / 13.0), d12 = std::abs(e12 - 12.0 / (12.0 + std::exp(1.0)));
  bool monotone = true;
  for (std::uint64_t e = 0; e < 200; ++e) monotone = monotone && truth_prob({12.0, e + 1}) < truth_prob({12.0, e});
  return {d0 < 1e-12 && d12 < 1e-12 && monotone,
          fmt("|p(0)-12/13|=%.2g |p(12)-12/(12+e)|=%.2g, strictly decreasing on 0..200: %s", d0, d12,
              monotone ? "yes" : "no")};
}

// ---- force decoding -------------------------------------------------------------

Outcome force_decoding() {
  Rng rng(77);
  std::size_t candidates = 0, bad_shape = 0, exhaustive = 0, mismatched = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const bool small = trial % 2 == 0;
    const std::size_t vt = small ? 6 : 6 + rng.below(20);  // 6 = UNK and two words
    const std::size_t L = small ? 1 + rng.below(4) : 1 + rng.below(12);
    const std::size_t k = 1 + rng.below(small ? 8 : 6);
    const ModelParams p = random_model(10000 + trial, small_dims(8, vt, 3, 4), 2.0);
    const auto src = random_tokens(rng, 1 + rng.below(6), 8);
    Rng noise_rng(trial);
    std::optional<GumbelConfig> noise;
    if (!small && trial % 4 == 1) noise = GumbelConfig{0.5, &noise_rng};
    const auto hyps = force_decode(p, src, L, k, noise);
    for (const auto& h : hyps) {
      ++candidates;
      const bool ok = h.tokens.size() == L + 1 && h.tokens.back() == kEos &&
                      std::count(h.tokens.begin(), h.tokens.end(), kEos) == 1;
      bad_shape += !ok;
    }
    if (!small) continue;
    // Exhaustive oracle: every EOS-free length-L sequence, ranked by its
    // score including the forced EOS. A beam wide enough to hold every
    // prefix must return the oracle's ranking, so its first k are the top k.
    ++exhaustive;
    const ModelScorer scorer(p, src);
    const auto all = enumerate_sequences(scorer, L, true);
    const auto wide = force_decode(scorer, L, all.size());
    const std::size_t top = std::min(k, all.size());
    std::set<std::vector<TokenId>> got, want;
    for (std::size_t i = 0; i < top; ++i) {
      got.insert(std::vector<TokenId>(wide[i].tokens.begin(), wide[i].tokens.end() - 1));
      want.insert(all[i].tokens);
    }
    bool same = got == want && wide.size() == all.size();
    for (std::size_t i = 0; i < top && same; ++i) same = std::abs(wide[i].score - all[i].score) < 1e-9;
    mismatched += !same;
  }
  return {bad_shape == 0 && mismatched == 0 && candidates > 0,
          fmt("%zu candidates, %zu malformed; %zu exhaustive instances, %zu top-k mismatches", candidates,
              bad_shape, exhaustive, mismatched)};
}

// ---- sentence oracle ---------------------------------------------------------

Outcome sentence_oracle_optimality() {
  Rng rng(99);
  std::size_t not_max = 0, planted = 0, planted_missed = 0, present = 0, present_missed = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t vt = 6 + rng.below(10);
    const ModelParams p = random_model(20000 + trial, small_dims(9, vt, 3, 3), 2.0);
    const auto src = random_tokens(rng, 1 + rng.below(6), 9);
    auto ref = random_tokens(rng, 1 + rng.below(8), vt);
    const std::size_t k = 1 + rng.below(5);
    Rng noise_rng(trial), replay(trial);
    const bool noisy = trial % 3 == 2;
    if (trial % 2 == 0) {
      const auto hyps = noisy ? force_decode(p, src, ref.size(), k, GumbelConfig{0.5, &replay})
                              : force_decode(p, src, ref.size(), k);
      const auto& h = hyps[rng.below(hyps.size())].tokens;
      ref.assign(h.begin(), h.end() - 1);
      ++planted;
    }
    std::optional<GumbelConfig> noise;
    if (noisy) noise = GumbelConfig{0.5, &noise_rng};
    const auto r = sentence_oracle(p, src, ref, k, noise);
    double best = -1;
    bool ref_present = false;
    for (const auto& c : r.candidates) {
      best = std::max(best, brute_sentence_bleu(c.tokens, ref));
      ref_present = ref_present || c.tokens == ref;
    }
    const auto& chosen = r.candidates[r.chosen];
    not_max += std::abs(brute_sentence_bleu(chosen.tokens, ref) - best) > 1e-12;
    if (ref_present) {
      ++present;
      present_missed += chosen.tokens != ref;
    }
    if (trial % 2 == 0) planted_missed += !ref_present;
  }
  return {not_max == 0 && present_missed == 0 && planted_missed == 0,
          fmt("1000 trials: %zu non-maximal picks; reference among candidates in %zu (%zu planted), missed %zu",
              not_max, present, planted, present_missed)};
}

// ---- BLEU ---------------------------------------------------------------------

Outcome bleu_equivalence() {
  Rng rng(5);
  double worst = 0;
  std::vector<std::vector<TokenId>> hyps, refs;
  for (int i = 0; i < 500; ++i) {
    const std::size_t vocab = 5 + rng.below(6);
    auto h = random_tokens(rng, rng.below(25), vocab);
    auto r = random_tokens(rng, 1 + rng.below(25), vocab);
    worst = std::max(worst, std::abs(sentence_bleu(h, r) - brute_sentence_bleu(h, r)));
    hyps.push_back(std::move(h));
    refs.push_back(std::move(r));
  }
  for (std::size_t n = 1; n <= hyps.size(); n += 37) {
    const std::vector<std::vector<TokenId>> hs(hyps.begin(), hyps.begin() + n), rs(refs.begin(), refs.begin() + n);
    worst = std::max(worst, std::abs(corpus_bleu(hs, rs) - brute_corpus_bleu(hs, rs)));
  }
  worst = std::max(worst, std::abs(corpus_bleu(hyps, refs) - brute_corpus_bleu(hyps, refs)));
  const std::vector<TokenId> hyp{10, 11, 12, 13}, ref{10, 11, 12, 14};
  const double example = sentence_bleu(hyp, ref);
  return {worst < 1e-12 && std::abs(example - 0.6581) < 1e-4,
          fmt("max |diff| vs brute force %.2g over 500 pairs; worked example %.4f", worst, example)};
}

// ---- noise isolation ------------------------------------------------------------

Outcome noise_isolation() {
  Rng rng(8);
  const ModelParams p = init_params(rng, {12, 11, 6, 5}, 0.8);
  const SentencePair pair{{4, 7, 5, 9}, {6, 4, 7, 5, 10}};
  const std::vector<TokenId> contexts{6, 8, 7, 5, 9};
  std::set<double> losses;
  std::set<std::vector<double>> grads_seen;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (auto mode : {OracleMode::WordNoise, OracleMode::SentenceNoise}) {
      ModelParams grads = ModelParams::zeros(p.dims);
      StepLossOptions opts;
      opts.mode = mode;
      opts.p = 0.5;
      opts.tau = 0.5;
      opts.forced_contexts = &contexts;
      SentenceRngs rngs = SentenceRngs::derive(1, 0, 0, 0);
      rngs.noise = Rng(1000 + seed);
      losses.insert(step_loss(p, &grads, pair, opts, rngs).loss);
      std::vector<double> flat;
      for (const auto& [name, t] : std::as_const(grads).named()) flat.insert(flat.end(), t->values().begin(), t->values().end());
      grads_seen.insert(flat);
    }
  }
  // Ground-truth feeding: noisy word oracles are computed but never fed.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    StepLossOptions opts;
    opts.mode = OracleMode::WordNoise;
    opts.p = 1.0;
    SentenceRngs rngs = SentenceRngs::derive(2, 0, 0, 0);
    rngs.noise = Rng(seed);
    SentenceRngs ref_rngs = SentenceRngs::derive(2, 0, 0, 0);
    if (step_loss(p, nullptr, pair, opts, rngs).loss != step_loss(p, nullptr, pair, {}, ref_rngs).loss)
      losses.insert(-1.0);
  }
  return {losses.size() == 1 && grads_seen.size() == 1,
          fmt("%zu distinct loss values and %zu distinct gradients over 10 noise seeds x 2 modes", losses.size(),
              grads_seen.size())};
}

// ---- training runs ------------------------------------------------------------

TrainData make_data(const TextCorpus& train, const TextCorpus& valid, std::size_t max_len) {
  TrainData d;
  std::ostringstream src, tgt;
  for (const auto& l : train.src) src << l << '\n';
  for (const auto& l : train.tgt) tgt << l << '\n';
  std::istringstream src_in(src.str()), tgt_in(tgt.str());
  d.src_vocab = Vocabulary::build(src_in, 0, 1);
  d.tgt_vocab = Vocabulary::build(tgt_in, 0, 1);
  d.train = numericalize(train, d.src_vocab, d.tgt_vocab, max_len);
  d.valid = numericalize(valid, d.src_vocab, d.tgt_vocab, 0);
  return d;
}

TextCorpus synth(SyntheticTask task, std::size_t vocab, std::size_t min_len, std::size_t max_len, std::size_t pairs,
                 std::uint64_t seed, double swap = 0.1) {
  SyntheticSpec s;
  s.task = task;
  s.vocab_size = vocab;
  s.min_len = min_len;
  s.max_len = max_len;
  s.pairs = pairs;
  s.seed = seed;
  s.swap_prob = swap;
  return gen_synthetic(s);
}

Outcome copy_task() {
  const auto start = std::chrono::steady_clock::now();
  const auto data = make_data(synth(SyntheticTask::Copy, 20, 3, 10, 2000, 11),
                              synth(SyntheticTask::Copy, 20, 3, 10, 200, 12), 0);
  TrainConfig c;
  c.embed = c.hidden = 32;
  c.oracle = OracleMode::None;
  c.epochs = 30;
  c.batch_size = 32;
  c.dropout = 0.0;
  c.valid_beam = 3;
  c.patience = 0;
  c.seed = 1;
  Trainer t(c, data);
  std::size_t reached = 0;
  while (!t.finished()) {
    t.run_epoch();
    if (t.epochs().back().val_bleu >= 0.95) {
      reached = t.epochs().back().epoch + 1;
      break;
    }
  }
  const double secs = seconds_since(start);
  const double best = t.best_bleu();
  return {reached > 0 && secs < 600.0,
          fmt("validation BLEU %.4f after %zu epochs (threshold 0.95 %s), %.0fs", best, t.epochs_done(),
              reached ? "reached" : "not reached", secs)};
}

struct CipherRun {
  OracleMode mode;
  std::uint64_t seed;
  double test_bleu = 0;
  std::size_t best_epoch = 0;
  bool curves_ok = false;
  double seconds = 0;
};

constexpr std::size_t kCipherEpochs = 30;

const std::vector<CipherRun>& cipher_runs() {
  static std::vector<CipherRun> runs = [] {
    const auto train = synth(SyntheticTask::Cipher, 50, 5, 15, 5000, 21);
    const auto valid = synth(SyntheticTask::Cipher, 50, 5, 15, 500, 22);
    const auto test = synth(SyntheticTask::Cipher, 50, 5, 15, 500, 23);
    const auto data = make_data(train, valid, 0);
    std::vector<std::vector<TokenId>> test_src, test_ref;
    for (std::size_t i = 0; i < test.src.size(); ++i) {
      test_src.push_back(data.src_vocab.encode(test.src[i]));
      test_ref.push_back(encode_reference(data.tgt_vocab, test.tgt[i]));
    }
    std::vector<CipherRun> out;
    for (std::uint64_t seed : {1, 2, 3}) {
      for (auto mode : {OracleMode::None, OracleMode::WordNoise, OracleMode::SentenceNoise}) {
        const auto start = std::chrono::steady_clock::now();
        TrainConfig c;
        c.embed = c.hidden = 32;
        c.oracle = mode;
        c.epochs = kCipherEpochs;
        c.batch_size = 32;
        c.dropout = 0.0;
        c.valid_beam = 3;
        c.patience = 0;
        c.seed = seed;
        c.record_time = false;
        TempDir dir;
        Trainer t(c, data, dir.path().string());
        t.run();
        CipherRun r{mode, seed};
        r.test_bleu = evaluate(t.best_params(), test_src, test_ref, 10).bleu;
        r.best_epoch = t.best_epoch();

        // Rebuild per-epoch curves from metrics.csv alone.
        std::map<std::size_t, std::pair<double, std::size_t>> loss;
        std::map<std::size_t, double> val;
        for (const auto& row : read_metrics(dir.file("metrics.csv"))) {
          loss[row.epoch].first += row.loss_per_token;
          loss[row.epoch].second += 1;
          if (row.val_bleu) val[row.epoch] = *row.val_bleu;
        }
        bool ok = loss.size() == t.epochs().size() && val.size() == t.epochs().size();
        for (const auto& s : t.epochs()) {
          ok = ok && val.count(s.epoch) && std::abs(val[s.epoch] - 100.0 * s.val_bleu) < 1e-4;
          ok = ok && loss.count(s.epoch) && std::isfinite(loss[s.epoch].first);
        }
        std::size_t peak = 0;
        for (const auto& [e, v] : val)
          if (v > val[peak]) peak = e;
        ok = ok && peak == r.best_epoch;
        const double first = loss.begin()->second.first / loss.begin()->second.second;
        const double last = loss.rbegin()->second.first / loss.rbegin()->second.second;
        r.curves_ok = ok && last < first;
        r.seconds = seconds_since(start);
        std::printf("  cipher seed %llu %-14s test BLEU %6.2f  peak epoch %2zu  %.0fs\n",
                    static_cast<unsigned long long>(seed), to_string(mode).c_str(), 100 * r.test_bleu, r.best_epoch,
                    r.seconds);
        std::fflush(stdout);
        out.push_back(r);
      }
    }
    return out;
  }();
  return runs;
}

double median_bleu(OracleMode mode) {
  std::vector<double> v;
  for (const auto& r : cipher_runs())
    if (r.mode == mode) v.push_back(r.test_bleu);
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Corpus BLEU of the swap-free translation of the test set: the best a model
// can do in expectation, since the swaps are unpredictable.
double cipher_ceiling() {
  const auto plain = synth(SyntheticTask::Cipher, 50, 5, 15, 2000, 5, 0.0);
  const auto test = synth(SyntheticTask::Cipher, 50, 5, 15, 500, 23);
  std::map<std::string, std::string> sub;
  for (std::size_t i = 0; i < plain.src.size(); ++i) {
    const auto a = split_tokens(plain.src[i]), b = split_tokens(plain.tgt[i]);
    for (std::size_t j = 0; j < a.size(); ++j) sub[a[j]] = b[j];
  }
  std::vector<std::string> words;
  for (std::size_t i = 0; i < 50; ++i) words.push_back("w" + std::to_string(i));
  const auto vocab = Vocabulary::from_tokens(words);
  std::vector<std::vector<TokenId>> hyps, refs;
  for (std::size_t i = 0; i < test.src.size(); ++i) {
    std::vector<TokenId> h;
    for (const auto& w : split_tokens(test.src[i])) h.push_back(vocab.id(sub.at(w)));
    hyps.push_back(h);
    refs.push_back(vocab.encode(test.tgt[i]));
  }
  return corpus_bleu(hyps, refs);
}

Outcome cipher_trend() {
  double total = 0;
  for (const auto& r : cipher_runs()) total += r.seconds;
  const double none = median_bleu(OracleMode::None), word = median_bleu(OracleMode::WordNoise),
               sent = median_bleu(OracleMode::SentenceNoise);
  return {sent >= word && word >= none && sent > none && total < 7200.0,
          fmt("median test BLEU none %.2f, word-noise %.2f, sentence-noise %.2f (swap-free ceiling %.2f); %.0fs total",
              100 * none, 100 * word, 100 * sent, 100 * cipher_ceiling(), total)};
}

Outcome convergence() {
  std::size_t earliest = 0;
  bool curves = true;
  std::string peaks;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::map<OracleMode, std::size_t> peak;
    for (const auto& r : cipher_runs()) {
      if (r.seed != seed) continue;
      peak[r.mode] = r.best_epoch;
      curves = curves && r.curves_ok;
    }
    const std::size_t others = std::min(peak[OracleMode::WordNoise], peak[OracleMode::SentenceNoise]);
    earliest += peak[OracleMode::None] <= others;
    peaks += fmt(" seed %llu: %zu/%zu/%zu;", static_cast<unsigned long long>(seed), peak[OracleMode::None],
                 peak[OracleMode::WordNoise], peak[OracleMode::SentenceNoise]);
  }
  return {curves && earliest >= 2,
          fmt("curves rebuilt from metrics.csv: %s; peak epochs none/word-noise/sentence-noise:%s none earliest in "
              "%zu of 3 seeds",
              curves ? "yes" : "no", peaks.c_str(), earliest)};
}

Outcome determinism() {
  const auto data = make_data(synth(SyntheticTask::Cipher, 50, 5, 15, 400, 31),
                              synth(SyntheticTask::Cipher, 50, 5, 15, 40, 32), 0);
  TrainConfig c;
  c.embed = c.hidden = 16;
  c.oracle = OracleMode::SentenceNoise;
  c.epochs = 3;
  c.batch_size = 16;
  c.dropout = 0.5;
  c.valid_beam = 3;
  c.seed = 7;
  c.record_time = false;
  c.mu = 1.0;  // oracle contexts are fed often from the first epoch
  TempDir a, b;
  Trainer(c, data, a.path().string()).run();
  Trainer(c, data, b.path().string()).run();
  std::size_t same = 0, total = 0;
  for (const char* f : {"metrics.csv", "best.ckpt", "last.ckpt"}) {
    ++total;
    const auto x = read_text(a.file(f)), y = read_text(b.file(f));
    same += !x.empty() && x == y;
  }
  return {same == total, fmt("%zu of %zu artifacts byte-identical (metrics.csv, best.ckpt, last.ckpt)", same, total)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-check", gradient_check},
      {"gumbel-max-law", gumbel_law},
      {"decay-schedule", decay},
      {"force-decoding", force_decoding},
      {"sentence-oracle", sentence_oracle_optimality},
      {"bleu-equivalence", bleu_equivalence},
      {"noise-isolation", noise_isolation},
      {"copy-task", copy_task},
      {"cipher-trend", cipher_trend},
      {"convergence", convergence},
      {"determinism", determinism},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
