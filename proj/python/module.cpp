#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "orseq/bleu.hpp"
#include "orseq/checkpoint.hpp"
#include "orseq/cli.hpp"
#include "orseq/gumbel.hpp"
#include "orseq/oracle.hpp"
#include "orseq/schedule.hpp"
#include "orseq/search.hpp"
#include "orseq/trainer.hpp"

namespace py = pybind11;
using namespace orseq;

namespace {

std::vector<std::vector<TokenId>> encode_lines(const Vocabulary& v, const std::vector<std::string>& lines) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(v.encode(l));
  return out;
}

std::vector<std::string> translate_lines(const Model& m, const std::vector<std::string>& lines, std::size_t beam) {
  const auto src = encode_lines(m.src_vocab, lines);
  std::vector<std::vector<TokenId>> hyps;
  {
    py::gil_scoped_release release;
    hyps = decode_all(m.params, src, beam);
  }
  std::vector<std::string> out;
  for (const auto& h : hyps) out.push_back(m.tgt_vocab.decode(h));
  return out;
}

double evaluate_lines(const Model& m, const std::vector<std::string>& src, const std::vector<std::string>& ref,
                      std::size_t beam) {
  std::vector<std::vector<TokenId>> refs;
  for (const auto& l : ref) refs.push_back(encode_reference(m.tgt_vocab, l));
  const auto ids = encode_lines(m.src_vocab, src);
  py::gil_scoped_release release;
  return evaluate(m.params, ids, refs, beam).bleu;
}

py::tuple run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sequence-to-sequence training with oracle-sampled decoder contexts";
  m.attr("__version__") = ORSEQ_VERSION;

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.def("sentence_bleu", [](const std::vector<TokenId>& hyp, const std::vector<TokenId>& ref) {
    return sentence_bleu(hyp, ref);
  }, py::arg("hyp"), py::arg("ref"), "Smoothed sentence BLEU in [0, 1]");
  m.def("corpus_bleu", &corpus_bleu, py::arg("hyps"), py::arg("refs"), "Corpus BLEU in [0, 1]");
  m.def("truth_prob", [](double mu, std::uint64_t epoch) { return truth_prob({mu, epoch}); }, py::arg("mu"),
        py::arg("epoch"), "Probability of feeding the ground-truth word in an epoch");
  m.def("perturbed_argmax", [](const std::vector<double>& logits, double tau, std::uint64_t seed) {
    Rng rng(seed);
    return word_oracle(Tensor::vector(logits), GumbelConfig{tau, &rng});
  }, py::arg("logits"), py::arg("tau"), py::arg("seed"), "Gumbel-perturbed argmax of one logit vector");

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def_static("from_tokens", &Vocabulary::from_tokens, py::arg("tokens"))
      .def_static("build_from_file", &Vocabulary::build_from_file, py::arg("path"), py::arg("max_size") = 30004,
                  py::arg("min_freq") = 1)
      .def("save", &Vocabulary::save, py::arg("path"))
      .def("encode", &Vocabulary::encode, py::arg("line"))
      .def("decode", [](const Vocabulary& v, const std::vector<TokenId>& ids) { return v.decode(ids); },
           py::arg("ids"))
      .def("id", &Vocabulary::id, py::arg("token"))
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("__len__", &Vocabulary::size);

  m.def("gen_synthetic", [](const std::string& task, std::size_t vocab_size, std::size_t min_len,
                            std::size_t max_len, std::size_t pairs, double swap_prob, std::uint64_t seed) {
    SyntheticSpec s;
    s.task = parse_task(task);
    s.vocab_size = vocab_size;
    s.min_len = min_len;
    s.max_len = max_len;
    s.pairs = pairs;
    s.swap_prob = swap_prob;
    s.seed = seed;
    const auto c = gen_synthetic(s);
    return py::make_tuple(c.src, c.tgt);
  }, py::arg("task"), py::arg("vocab_size") = 20, py::arg("min_len") = 3, py::arg("max_len") = 10,
     py::arg("pairs") = 1000, py::arg("swap_prob") = 0.1, py::arg("seed") = 1,
     "Synthetic parallel corpus as (sources, targets)");

  py::class_<Model>(m, "Model")
      .def_static("load", &load_model, py::arg("path"))
      .def_readonly("src_vocab", &Model::src_vocab)
      .def_readonly("tgt_vocab", &Model::tgt_vocab)
      .def_property_readonly("config", [](const Model& m) { return m.config.to_json().dump(); })
      .def_property_readonly("parameter_count", [](const Model& m) { return m.params.parameter_count(); })
      .def("translate", &translate_lines, py::arg("lines"), py::arg("beam") = 10)
      .def("evaluate", &evaluate_lines, py::arg("src"), py::arg("ref"), py::arg("beam") = 10,
           "Corpus BLEU in [0, 1]")
      .def("sentence_oracle", [](const Model& m, const std::string& src, const std::string& ref, std::size_t k) {
        const auto r = sentence_oracle(m.params, m.src_vocab.encode(src), m.tgt_vocab.encode(ref), k);
        return m.tgt_vocab.decode(r.candidates[r.chosen].tokens);
      }, py::arg("src"), py::arg("ref"), py::arg("k") = 3);

  m.def("run_cli", &run, py::arg("args"), "Runs the command-line tool; returns (exit code, stdout, stderr)");
}
