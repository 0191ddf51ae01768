#include "orseq/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <ostream>

#include "orseq/bleu.hpp"
#include "orseq/data.hpp"
#include "orseq/oracle.hpp"
#include "orseq/search.hpp"
#include "orseq/trainer.hpp"

namespace orseq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kOracleModes = {"none", "word", "word-noise", "sentence", "sentence-noise"};

std::string format_bleu(double bleu) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", bleu * 100.0);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

std::vector<std::string> join_tokens(const Vocabulary& vocab, const std::vector<std::vector<TokenId>>& hyps) {
  std::vector<std::string> lines;
  lines.reserve(hyps.size());
  for (const auto& h : hyps) lines.push_back(vocab.decode(h));
  return lines;
}

std::vector<std::string> tokens_of(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::vector<std::string> out;
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

// ---- build-vocab ------------------------------------------------------------

struct BuildVocabArgs {
  std::string input, out;
  std::size_t max_size = 30000 + kNumReserved;
  std::size_t min_freq = 1;
};

void add_build_vocab(CLI::App& app, BuildVocabArgs& a) {
  auto* cmd = app.add_subcommand("build-vocab", "Build a frequency-ordered vocabulary file");
  cmd->add_option("--input", a.input, "Tokenized corpus, one sentence per line")->required();
  cmd->add_option("--out", a.out, "Output vocabulary file")->required();
  cmd->add_option("--max-size", a.max_size, "Maximum entries including the 4 reserved (0 = unbounded)");
  cmd->add_option("--min-freq", a.min_freq, "Drop tokens seen fewer times");
}

int build_vocab_cmd(const BuildVocabArgs& a, std::ostream& out) {
  const auto vocab = Vocabulary::build_from_file(a.input, a.max_size, a.min_freq);
  vocab.save(a.out);
  out << "wrote " << vocab.size() << " entries to " << a.out << '\n';
  return 0;
}

// ---- gen-synthetic ----------------------------------------------------------

struct GenArgs {
  std::string spec_path, out_src, out_tgt, task;
  std::size_t vocab_size = 0, min_len = 0, max_len = 0, pairs = 0;
  double swap_prob = -1.0;
  std::uint64_t seed = 0;
  CLI::App* cmd = nullptr;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* cmd = a.cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic parallel corpus");
  cmd->add_option("--spec", a.spec_path, "key = value spec file");
  cmd->add_option("--task", a.task, "copy | reverse | cipher")->check(CLI::IsMember({"copy", "reverse", "cipher"}));
  cmd->add_option("--vocab-size", a.vocab_size);
  cmd->add_option("--min-len", a.min_len);
  cmd->add_option("--max-len", a.max_len);
  cmd->add_option("--pairs", a.pairs);
  cmd->add_option("--swap-prob", a.swap_prob);
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--out-src", a.out_src)->required();
  cmd->add_option("--out-tgt", a.out_tgt)->required();
}

int gen_cmd(const GenArgs& a, std::ostream& out) {
  SyntheticSpec spec = a.spec_path.empty() ? SyntheticSpec::parse("") : SyntheticSpec::load(a.spec_path);
  if (a.cmd->count("--task")) spec.task = parse_task(a.task);
  if (a.cmd->count("--vocab-size")) spec.vocab_size = a.vocab_size;
  if (a.cmd->count("--min-len")) spec.min_len = a.min_len;
  if (a.cmd->count("--max-len")) spec.max_len = a.max_len;
  if (a.cmd->count("--pairs")) spec.pairs = a.pairs;
  if (a.cmd->count("--swap-prob")) spec.swap_prob = a.swap_prob;
  if (a.cmd->count("--seed")) spec.seed = a.seed;
  if (spec.vocab_size == 0 || spec.min_len == 0 || spec.min_len > spec.max_len)
    throw Error("gen-synthetic: need vocab-size > 0 and 0 < min-len <= max-len");
  const auto corpus = gen_synthetic(spec);
  write_lines(a.out_src, corpus.src);
  write_lines(a.out_tgt, corpus.tgt);
  out << "wrote " << corpus.src.size() << " pairs\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path, train_src, train_tgt, valid_src, valid_tgt, test_src, test_tgt;
  std::string src_vocab, tgt_vocab, out_dir;
  std::size_t vocab_size = 30000 + kNumReserved;
  bool resume = false, quiet = false, no_wall_time = false;
  std::size_t test_beam = 10;
  // overrides
  std::string oracle, optimizer;
  std::size_t dim = 0, embed = 0, hidden = 0, oracle_beam = 0, epochs = 0, batch_size = 0, patience = 0,
              valid_beam = 0, max_len = 0;
  double tau = 0, mu = 0, lr = 0, rho = 0, eps = 0, dropout = 0, clip_norm = 0;
  std::uint64_t seed = 0;
  CLI::App* cmd = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = a.cmd = app.add_subcommand("train", "Train a model");
  cmd->add_option("--config", a.config_path, "JSON training config; flags override it");
  cmd->add_option("--train-src", a.train_src)->required();
  cmd->add_option("--train-tgt", a.train_tgt)->required();
  cmd->add_option("--valid-src", a.valid_src)->required();
  cmd->add_option("--valid-tgt", a.valid_tgt)->required();
  cmd->add_option("--test-src", a.test_src, "Evaluate the selected model on this set when done");
  cmd->add_option("--test-tgt", a.test_tgt);
  cmd->add_option("--test-beam", a.test_beam);
  cmd->add_option("--src-vocab", a.src_vocab, "Vocabulary file (built from --train-src if absent)");
  cmd->add_option("--tgt-vocab", a.tgt_vocab, "Vocabulary file (built from --train-tgt if absent)");
  cmd->add_option("--vocab-size", a.vocab_size, "Entries including reserved when building vocabularies");
  cmd->add_option("--out-dir", a.out_dir)->required();
  cmd->add_flag("--resume", a.resume, "Continue from <out-dir>/last.ckpt");
  cmd->add_flag("--quiet", a.quiet);
  cmd->add_flag("--no-wall-time", a.no_wall_time, "Write 0 in the metrics seconds column");
  cmd->add_option("--oracle", a.oracle)->check(CLI::IsMember(kOracleModes));
  cmd->add_option("--optimizer", a.optimizer)->check(CLI::IsMember({"sgd", "adadelta"}));
  cmd->add_option("--dim", a.dim, "Embedding and hidden size");
  cmd->add_option("--embed", a.embed);
  cmd->add_option("--hidden", a.hidden);
  cmd->add_option("--tau", a.tau);
  cmd->add_option("--mu", a.mu);
  cmd->add_option("--oracle-beam", a.oracle_beam);
  cmd->add_option("--epochs", a.epochs);
  cmd->add_option("--batch-size", a.batch_size);
  cmd->add_option("--lr", a.lr);
  cmd->add_option("--rho", a.rho);
  cmd->add_option("--eps", a.eps);
  cmd->add_option("--dropout", a.dropout);
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--patience", a.patience);
  cmd->add_option("--clip-norm", a.clip_norm);
  cmd->add_option("--valid-beam", a.valid_beam);
  cmd->add_option("--max-len", a.max_len, "Drop training pairs longer than this");
}

TrainConfig merged_config(const TrainArgs& a) {
  json j = a.config_path.empty() ? json::object() : read_json_file(a.config_path);
  const CLI::App& c = *a.cmd;
  if (c.count("--oracle")) j["oracle"] = a.oracle;
  if (c.count("--optimizer")) j["optimizer"] = a.optimizer;
  if (c.count("--dim")) j["embed"] = j["hidden"] = a.dim;
  if (c.count("--embed")) j["embed"] = a.embed;
  if (c.count("--hidden")) j["hidden"] = a.hidden;
  if (c.count("--tau")) j["tau"] = a.tau;
  if (c.count("--mu")) j["mu"] = a.mu;
  if (c.count("--oracle-beam")) j["oracle_beam"] = a.oracle_beam;
  if (c.count("--epochs")) j["epochs"] = a.epochs;
  if (c.count("--batch-size")) j["batch_size"] = a.batch_size;
  if (c.count("--lr")) j["lr"] = a.lr;
  if (c.count("--rho")) j["rho"] = a.rho;
  if (c.count("--eps")) j["eps"] = a.eps;
  if (c.count("--dropout")) j["dropout"] = a.dropout;
  if (c.count("--seed")) j["seed"] = a.seed;
  if (c.count("--patience")) j["patience"] = a.patience;
  if (c.count("--clip-norm")) j["clip_norm"] = a.clip_norm;
  if (c.count("--valid-beam")) j["valid_beam"] = a.valid_beam;
  if (c.count("--max-len")) j["max_len"] = a.max_len;
  if (a.no_wall_time) j["record_time"] = false;
  return TrainConfig::from_json(j);
}

int train_cmd(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = merged_config(a);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  json corpora = json::object();
  for (const auto& p : {a.train_src, a.train_tgt, a.valid_src, a.valid_tgt}) corpora[p] = file_checksum(p);
  const fs::path manifest_path = dir / "manifest.json";
  if (a.resume) {
    const json old = read_json_file(manifest_path.string());
    if (old.at("corpora") != corpora) throw Error("resume: corpus checksums differ from " + manifest_path.string());
    if (old.at("config") != config.to_json()) throw Error("resume: configuration differs from " + manifest_path.string());
  }

  const Vocabulary src_vocab = a.src_vocab.empty() ? Vocabulary::build_from_file(a.train_src, a.vocab_size, 1)
                                                   : Vocabulary::load(a.src_vocab);
  const Vocabulary tgt_vocab = a.tgt_vocab.empty() ? Vocabulary::build_from_file(a.train_tgt, a.vocab_size, 1)
                                                   : Vocabulary::load(a.tgt_vocab);
  src_vocab.save((dir / "src.vocab").string());
  tgt_vocab.save((dir / "tgt.vocab").string());

  TrainData data;
  data.train = numericalize(read_parallel(a.train_src, a.train_tgt), src_vocab, tgt_vocab, config.max_len);
  data.valid = numericalize(read_parallel(a.valid_src, a.valid_tgt), src_vocab, tgt_vocab, 0);
  data.src_vocab = src_vocab;
  data.tgt_vocab = tgt_vocab;

  if (!a.resume) {
    const json manifest = {{"version", ORSEQ_VERSION},
                           {"config", config.to_json()},
                           {"seed", config.seed},
                           {"corpora", corpora},
                           {"artifacts",
                            {{"best", "best.ckpt"},
                             {"last", "last.ckpt"},
                             {"metrics", "metrics.csv"},
                             {"src_vocab", "src.vocab"},
                             {"tgt_vocab", "tgt.vocab"}}}};
    write_json_file(manifest_path.string(), manifest);
  }

  Trainer trainer(config, std::move(data), dir.string());
  if (a.resume) trainer.resume();
  if (!a.quiet) {
    trainer.on_epoch = [&out](const EpochSummary& s) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %zu  p=%.4f  loss/token=%.4f  valid BLEU=%.2f\n", s.epoch, s.p_truth,
                    s.loss_per_token, s.val_bleu * 100.0);
      out << buf << std::flush;
    };
  }
  trainer.run();
  out << "best valid BLEU " << format_bleu(std::max(0.0, trainer.best_bleu())) << " at epoch "
      << trainer.best_epoch() << '\n';

  if (!a.test_src.empty()) {
    const auto test = read_parallel(a.test_src, a.test_tgt);
    std::vector<std::vector<TokenId>> sources, refs;
    for (std::size_t i = 0; i < test.src.size(); ++i) {
      sources.push_back(src_vocab.encode(test.src[i]));
      refs.push_back(encode_reference(tgt_vocab, test.tgt[i]));
    }
    const auto r = evaluate(trainer.best_params(), sources, refs, a.test_beam);
    write_lines((dir / "test.hyp").string(), join_tokens(tgt_vocab, r.hypotheses));
    std::ofstream((dir / "test_bleu.txt").string()) << format_bleu(r.bleu) << '\n';
    out << "test BLEU " << format_bleu(r.bleu) << '\n';
  }
  return 0;
}

// ---- translate / evaluate ---------------------------------------------------

struct DecodeArgs {
  std::string checkpoint, input, reference, output;
  std::size_t beam = 10;
  std::size_t max_len = 0;
};

void add_translate(CLI::App& app, DecodeArgs& a) {
  auto* cmd = app.add_subcommand("translate", "Decode a source file with beam search");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--input", a.input)->required();
  cmd->add_option("--output", a.output, "Hypothesis file (stdout if absent)");
  cmd->add_option("--beam", a.beam);
  cmd->add_option("--max-len", a.max_len, "Decoding limit (default 2 * source length + 5)");
}

void add_evaluate(CLI::App& app, DecodeArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Decode a test set and report corpus BLEU");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--src", a.input)->required();
  cmd->add_option("--ref", a.reference)->required();
  cmd->add_option("--output", a.output, "Also write hypotheses here");
  cmd->add_option("--beam", a.beam);
}

int translate_cmd(const DecodeArgs& a, std::ostream& out) {
  if (a.beam == 0) throw Error("translate: beam must be at least 1");
  const Model m = load_model(a.checkpoint);
  std::vector<std::vector<TokenId>> sources;
  for (const auto& line : read_lines(a.input)) sources.push_back(m.src_vocab.encode(line));
  const auto lines = join_tokens(m.tgt_vocab, decode_all(m.params, sources, a.beam, a.max_len));
  if (a.output.empty()) {
    for (const auto& l : lines) out << l << '\n';
  } else {
    write_lines(a.output, lines);
  }
  return 0;
}

int evaluate_cmd(const DecodeArgs& a, std::ostream& out) {
  if (a.beam == 0) throw Error("evaluate: beam must be at least 1");
  const Model m = load_model(a.checkpoint);
  const auto test = read_parallel(a.input, a.reference);
  std::vector<std::vector<TokenId>> sources, refs;
  for (std::size_t i = 0; i < test.src.size(); ++i) {
    sources.push_back(m.src_vocab.encode(test.src[i]));
    refs.push_back(encode_reference(m.tgt_vocab, test.tgt[i]));
  }
  const auto r = evaluate(m.params, sources, refs, a.beam);
  if (!a.output.empty()) write_lines(a.output, join_tokens(m.tgt_vocab, r.hypotheses));
  out << format_bleu(r.bleu) << '\n';
  return 0;
}

// ---- oracle-dump ------------------------------------------------------------

struct DumpArgs {
  std::string checkpoint, src, tgt, out;
  std::size_t oracle_beam = 3;
  double tau = 0.5;
  bool noise = false;
  std::size_t limit = 0;
  std::uint64_t seed = 1;
};

void add_dump(CLI::App& app, DumpArgs& a) {
  auto* cmd = app.add_subcommand("oracle-dump", "Write word- and sentence-level oracles for a corpus sample");
  cmd->add_option("--checkpoint", a.checkpoint)->required();
  cmd->add_option("--src", a.src)->required();
  cmd->add_option("--tgt", a.tgt)->required();
  cmd->add_option("--out", a.out, "JSON-lines output")->required();
  cmd->add_option("--oracle-beam", a.oracle_beam);
  cmd->add_option("--tau", a.tau);
  cmd->add_flag("--noise", a.noise, "Apply Gumbel noise to both oracles");
  cmd->add_option("--limit", a.limit, "Only the first N usable pairs (0 = all)");
  cmd->add_option("--seed", a.seed);
}

int dump_cmd(const DumpArgs& a, std::ostream& out) {
  if (!(a.tau > 0.0)) throw Error("oracle-dump: tau must be positive");
  const Model m = load_model(a.checkpoint);
  auto pairs = numericalize(read_parallel(a.src, a.tgt), m.src_vocab, m.tgt_vocab, 0);
  if (a.limit && pairs.size() > a.limit) pairs.resize(a.limit);

  std::vector<std::string> lines(pairs.size());
  std::vector<int> diverged(pairs.size(), 0);
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& pair = pairs[i];
    SentenceRngs rngs = SentenceRngs::derive(a.seed, 0, 0, i);
    StepLossOptions opts;
    opts.mode = a.noise ? OracleMode::WordNoise : OracleMode::Word;
    opts.p = 1.0;  // ground-truth history, so each word oracle answers "what would the model say here"
    opts.tau = a.tau;
    const auto word = step_loss(m.params, nullptr, pair, opts, rngs);

    Rng noise_rng = Rng::derive(a.seed, {0, 0, i, 4});
    std::optional<GumbelConfig> noise;
    if (a.noise) noise = GumbelConfig{a.tau, &noise_rng};
    const auto so = sentence_oracle(m.params, pair.src, pair.tgt, a.oracle_beam, noise);

    json cands = json::array();
    for (const auto& c : so.candidates)
      cands.push_back({{"tokens", tokens_of(m.tgt_vocab, c.tokens)}, {"model_score", c.model_score}, {"bleu", c.bleu}});
    const auto& chosen = so.candidates[so.chosen];
    json row = {{"index", i},
                {"source", tokens_of(m.src_vocab, pair.src)},
                {"reference", tokens_of(m.tgt_vocab, pair.tgt)},
                {"word_oracle", tokens_of(m.tgt_vocab, word.oracles)},
                {"sentence_oracle", tokens_of(m.tgt_vocab, chosen.tokens)},
                {"chosen", so.chosen},
                {"chosen_bleu", chosen.bleu},
                {"candidates", cands}};
    lines[i] = row.dump();
    diverged[i] = chosen.tokens != pair.tgt || word.oracles != pair.tgt;
  });
  write_lines(a.out, lines);
  std::size_t n_div = 0;
  for (int d : diverged) n_div += static_cast<std::size_t>(d);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu sentences, divergence rate %.4f\n", pairs.size(),
                pairs.empty() ? 0.0 : static_cast<double>(n_div) / static_cast<double>(pairs.size()));
  out << buf;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"orseq: sequence-to-sequence training with oracle-sampled contexts", "orseq"};
  app.set_version_flag("--version", ORSEQ_VERSION);
  app.require_subcommand(1);

  BuildVocabArgs bv;
  GenArgs gen;
  TrainArgs tr;
  DecodeArgs tl, ev;
  DumpArgs dump;
  add_build_vocab(app, bv);
  add_gen(app, gen);
  add_train(app, tr);
  add_translate(app, tl);
  add_evaluate(app, ev);
  add_dump(app, dump);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (app.got_subcommand("build-vocab")) return build_vocab_cmd(bv, out);
    if (app.got_subcommand("gen-synthetic")) return gen_cmd(gen, out);
    if (app.got_subcommand("train")) return train_cmd(tr, out);
    if (app.got_subcommand("translate")) return translate_cmd(tl, out);
    if (app.got_subcommand("evaluate")) return evaluate_cmd(ev, out);
    if (app.got_subcommand("oracle-dump")) return dump_cmd(dump, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace orseq
