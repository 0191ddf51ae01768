#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "orseq/cli.hpp"
#include "orseq/trainer.hpp"
#include "support.hpp"

using namespace orseq;
using namespace orseq::testing;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

// A small copy corpus plus a three-epoch model trained on it.
struct TinyRun {
  TempDir dir;
  std::string model;
  TinyRun() {
    for (auto [name, seed, pairs] : {std::tuple{"train", "1", "40"}, {"valid", "2", "8"}, {"test", "3", "8"}}) {
      const auto r = cli({"gen-synthetic", "--task", "copy", "--vocab-size", "8", "--min-len", "2", "--max-len", "5",
                          "--pairs", pairs, "--seed", seed, "--out-src", dir.file(std::string(name) + ".src"),
                          "--out-tgt", dir.file(std::string(name) + ".tgt")});
      REQUIRE(r.code == 0);
    }
    const auto r = cli({"train", "--train-src", dir.file("train.src"), "--train-tgt", dir.file("train.tgt"),
                        "--valid-src", dir.file("valid.src"), "--valid-tgt", dir.file("valid.tgt"), "--test-src",
                        dir.file("test.src"), "--test-tgt", dir.file("test.tgt"), "--out-dir", dir.file("run"),
                        "--dim", "6", "--epochs", "3", "--batch-size", "8", "--valid-beam", "2", "--test-beam", "2",
                        "--oracle", "sentence-noise", "--no-wall-time"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    model = dir.file("run/best.ckpt");
  }
};

}  // namespace

TEST_CASE("build-vocab orders by frequency") {
  TempDir dir;
  write_text(dir.file("corpus.txt"), "b a a\nc a b\n");
  auto r = cli({"build-vocab", "--input", dir.file("corpus.txt"), "--out", dir.file("v.txt")});
  REQUIRE(r.code == 0);
  CHECK(read_text(dir.file("v.txt")) == "<pad>\n<unk>\n<s>\n</s>\na\nb\nc\n");

  r = cli({"build-vocab", "--input", dir.file("corpus.txt"), "--out", dir.file("v2.txt"), "--min-freq", "2"});
  REQUIRE(r.code == 0);
  CHECK(Vocabulary::load(dir.file("v2.txt")).tokens() ==
        std::vector<std::string>{"<pad>", "<unk>", "<s>", "</s>", "a", "b"});

  r = cli({"build-vocab", "--input", dir.file("missing.txt"), "--out", dir.file("v3.txt")});
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("usage errors are reported without running anything") {
  TempDir dir;
  auto r = cli({"train", "--train-src", "a", "--train-tgt", "b", "--valid-src", "c", "--valid-tgt", "d", "--out-dir",
                dir.file("x"), "--oracle", "beam"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--oracle") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.file("x")));
  CHECK(cli({}).code != 0);
  CHECK(cli({"frobnicate"}).code != 0);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("gen-synthetic honours the spec file and overrides") {
  TempDir dir;
  write_text(dir.file("spec.txt"), "# cipher\ntask = cipher\nvocab_size = 12\nmin_len = 4\nmax_len = 4\npairs = 5\n");
  const auto r = cli({"gen-synthetic", "--spec", dir.file("spec.txt"), "--pairs", "7", "--out-src", dir.file("s"),
                      "--out-tgt", dir.file("t")});
  REQUIRE(r.code == 0);
  const auto src = read_lines(dir.file("s")), tgt = read_lines(dir.file("t"));
  CHECK(src.size() == 7);
  CHECK(tgt.size() == 7);
  for (const auto& line : src) CHECK(split_tokens(line).size() == 4);
}

TEST_CASE("train, evaluate, translate and oracle-dump on a tiny corpus") {
  TinyRun run;
  const auto& dir = run.dir;
  for (const char* f : {"metrics.csv", "best.ckpt", "last.ckpt", "manifest.json", "test.hyp", "test_bleu.txt",
                        "src.vocab", "tgt.vocab"})
    CHECK(std::filesystem::exists(dir.file(std::string("run/") + f)));
  CHECK(count_lines(read_text(dir.file("run/test.hyp"))) == 8);
  CHECK(read_metrics(dir.file("run/metrics.csv")).size() == 3 * 5);
  const auto manifest = nlohmann::json::parse(read_text(dir.file("run/manifest.json")));
  CHECK(manifest.at("config").at("oracle") == "sentence-noise");
  CHECK(manifest.at("corpora").size() == 4);

  SUBCASE("evaluate prints a two-decimal score") {
    const auto r = cli({"evaluate", "--checkpoint", run.model, "--src", dir.file("test.src"), "--ref",
                        dir.file("test.tgt"), "--beam", "2"});
    REQUIRE(r.code == 0);
    const std::string line = r.out.substr(0, r.out.find('\n'));
    const auto dot = line.find('.');
    REQUIRE(dot != std::string::npos);
    CHECK(line.size() - dot - 1 == 2);
    const double score = std::stod(line);
    CHECK(score >= 0.0);
    CHECK(score <= 100.0);
  }

  SUBCASE("translate with beam 1 is greedy decoding") {
    const auto r = cli({"translate", "--checkpoint", run.model, "--input", dir.file("test.src"), "--output",
                        dir.file("hyp"), "--beam", "1"});
    REQUIRE(r.code == 0);
    const Model m = load_model(run.model);
    const auto lines = read_lines(dir.file("test.src"));
    const auto hyps = read_lines(dir.file("hyp"));
    REQUIRE(hyps.size() == lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto src = m.src_vocab.encode(lines[i]);
      const ModelScorer scorer(m.params, src);
      const auto g = greedy_decode(scorer, default_max_len(src.size()));
      CHECK(hyps[i] == m.tgt_vocab.decode(g.tokens));
    }
  }

  SUBCASE("resume rejects a changed corpus") {
    write_text(dir.file("train.src"), read_text(dir.file("train.src")) + "w1 w2\n");
    write_text(dir.file("train.tgt"), read_text(dir.file("train.tgt")) + "w1 w2\n");
    const auto r = cli({"train", "--train-src", dir.file("train.src"), "--train-tgt", dir.file("train.tgt"),
                        "--valid-src", dir.file("valid.src"), "--valid-tgt", dir.file("valid.tgt"), "--out-dir",
                        dir.file("run"), "--dim", "6", "--epochs", "4", "--batch-size", "8", "--valid-beam", "2",
                        "--oracle", "sentence-noise", "--no-wall-time", "--resume"});
    CHECK(r.code != 0);
    CHECK(r.err.find("checksum") != std::string::npos);
  }
}

TEST_CASE("oracle-dump on an untrained model") {
  TempDir dir;
  Rng rng(3);
  std::vector<std::string> words;
  for (int i = 0; i < 10; ++i) words.push_back("w" + std::to_string(i));
  const auto vocab = Vocabulary::from_tokens(words);
  TrainConfig cfg;
  cfg.embed = cfg.hidden = 5;
  Model m{init_params(rng, {vocab.size(), vocab.size(), 5, 5}), vocab, vocab, cfg};
  save_checkpoint(dir.file("m.ckpt"), model_checkpoint(m));
  write_text(dir.file("s"), "w1 w2 w3\nw4 w5\nw6 w7 w8 w9\n");
  write_text(dir.file("t"), "w3 w2 w1\nw5 w4\nw9 w8 w7 w6\n");
  const auto r = cli({"oracle-dump", "--checkpoint", dir.file("m.ckpt"), "--src", dir.file("s"), "--tgt",
                      dir.file("t"), "--out", dir.file("dump.jsonl"), "--noise"});
  REQUIRE(r.code == 0);
  const auto lines = read_lines(dir.file("dump.jsonl"));
  REQUIRE(lines.size() == 3);
  for (const auto& line : lines) {
    const auto row = nlohmann::json::parse(line);
    const auto ref = row.at("reference").get<std::vector<std::string>>();
    const auto chosen = row.at("sentence_oracle").get<std::vector<std::string>>();
    CHECK(chosen.size() == ref.size());
    CHECK(row.at("word_oracle").size() == ref.size());
    CHECK(row.at("candidates").size() <= 3);
    std::vector<TokenId> h, y;
    for (const auto& w : chosen) h.push_back(vocab.id(w));
    for (const auto& w : ref) y.push_back(vocab.id(w));
    CHECK(row.at("chosen_bleu").get<double>() == doctest::Approx(sentence_bleu(h, y)).epsilon(1e-12));
  }
  const auto pos = r.out.find("divergence rate ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 16)) > 0.0);
}
