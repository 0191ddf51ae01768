#include "orseq/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "orseq/bleu.hpp"
#include "orseq/graph.hpp"
#include "orseq/gumbel.hpp"
#include "orseq/schedule.hpp"
#include "orseq/search.hpp"

namespace orseq {

namespace fs = std::filesystem;

// ---- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!embed || !hidden) throw Error("config: embed and hidden must be positive");
  if (!(tau > 0.0)) throw Error("config: tau must be positive");
  if (!(mu > 0.0)) throw Error("config: mu must be positive");
  if (oracle_beam < 1) throw Error("config: oracle_beam must be at least 1");
  if (!batch_size) throw Error("config: batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("config: dropout must lie in [0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw Error("config: rho must lie in (0, 1)");
  if (!(eps > 0.0)) throw Error("config: eps must be positive");
  if (optimizer == OptimizerKind::Sgd && !(lr > 0.0)) throw Error("config: lr must be positive");
  if (!valid_beam) throw Error("config: valid_beam must be at least 1");
  if (clip_norm < 0.0) throw Error("config: clip_norm must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"embed", embed},
          {"hidden", hidden},
          {"oracle", to_string(oracle)},
          {"tau", tau},
          {"mu", mu},
          {"oracle_beam", oracle_beam},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"optimizer", optimizer == OptimizerKind::Sgd ? "sgd" : "adadelta"},
          {"lr", lr},
          {"rho", rho},
          {"eps", eps},
          {"dropout", dropout},
          {"seed", seed},
          {"patience", patience},
          {"clip_norm", clip_norm},
          {"valid_beam", valid_beam},
          {"max_len", max_len},
          {"record_time", record_time}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw Error("config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "embed") c.embed = v.get<std::size_t>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "oracle") c.oracle = parse_oracle_mode(v.get<std::string>());
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "mu") c.mu = v.get<double>();
      else if (key == "oracle_beam") c.oracle_beam = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "optimizer") {
        const auto name = v.get<std::string>();
        if (name == "sgd") c.optimizer = OptimizerKind::Sgd;
        else if (name == "adadelta") c.optimizer = OptimizerKind::Adadelta;
        else throw Error("config: unknown optimizer '" + name + "' (sgd, adadelta)");
      }
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "rho") c.rho = v.get<double>();
      else if (key == "eps") c.eps = v.get<double>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "valid_beam") c.valid_beam = v.get<std::size_t>();
      else if (key == "max_len") c.max_len = v.get<std::size_t>();
      else if (key == "record_time") c.record_time = v.get<bool>();
      else throw Error("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- optimizers ---------------------------------------------------------------

OptState OptState::zeros_like(const ModelParams& params) {
  OptState s;
  for (const auto& [name, t] : params.named()) {
    s.sq_grad.emplace_back(t->shape());
    s.sq_delta.emplace_back(t->shape());
  }
  return s;
}

void adadelta_update(ModelParams& params, const ModelParams& grads, OptState& state, double rho, double eps) {
  auto ps = params.named();
  auto gs = grads.named();
  if (ps.size() != state.sq_grad.size()) throw Error("adadelta: optimizer state does not match parameters");
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor& x = *ps[k].second;
    const Tensor& g = *gs[k].second;
    Tensor& eg2 = state.sq_grad[k];
    Tensor& edx2 = state.sq_delta[k];
    if (g.shape() != x.shape()) throw ShapeError("adadelta " + ps[k].first, x.shape(), g.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      eg2[i] = rho * eg2[i] + (1.0 - rho) * g[i] * g[i];
      const double dx = -std::sqrt(edx2[i] + eps) / std::sqrt(eg2[i] + eps) * g[i];
      edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
      x[i] += dx;
    }
  }
}

void sgd_update(ModelParams& params, const ModelParams& grads, double lr) {
  auto ps = params.named();
  auto gs = grads.named();
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (std::size_t i = 0; i < ps[k].second->size(); ++i) (*ps[k].second)[i] -= lr * (*gs[k].second)[i];
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : std::as_const(grads).named())
    for (double v : t->values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, t] : grads.named())
      for (auto& v : t->values()) v *= f;
  }
  return norm;
}

// ---- loss ---------------------------------------------------------------------

SentenceRngs SentenceRngs::derive(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch,
                                  std::uint64_t index) {
  return {Rng::derive(seed, {epoch, batch, index, 1}), Rng::derive(seed, {epoch, batch, index, 2}),
          Rng::derive(seed, {epoch, batch, index, 3})};
}

LossResult step_loss(const ModelParams& params, ModelParams* grads, const SentencePair& pair,
                     const StepLossOptions& options, SentenceRngs& rngs) {
  const auto& tgt = pair.tgt;
  if (tgt.empty()) throw Error("step_loss: empty target sentence");
  if (is_sentence_mode(options.mode) && !options.forced_contexts &&
      (!options.sentence_oracle || options.sentence_oracle->size() != tgt.size()))
    throw Error("step_loss: sentence oracle missing or not of target length");
  if (options.forced_contexts && options.forced_contexts->size() != tgt.size())
    throw Error("step_loss: forced contexts must have target length");

  Graph g;
  Seq2SeqGraph model(g, params, grads);
  const auto annotations = model.encode(pair.src);
  auto state = model.initial_state(annotations);

  LossResult r;
  std::vector<Expr> terms;
  const std::size_t n = tgt.size();
  const std::size_t readout = params.dims.embed;
  const double keep = 1.0 - options.dropout;
  std::optional<GumbelConfig> noise;
  if (options.mode == OracleMode::WordNoise) noise = GumbelConfig{options.tau, &rngs.noise};

  TokenId context = kBos;
  for (std::size_t j = 1; j <= n + 1; ++j) {
    r.contexts.push_back(context);
    std::optional<Tensor> mask;
    if (options.dropout > 0.0) {
      mask.emplace(Shape{readout});
      for (auto& v : mask->values()) v = rngs.dropout.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
    const auto step = model.decoder_step(context, state, annotations, mask ? &*mask : nullptr);
    const TokenId target = j <= n ? tgt[j - 1] : kEos;
    r.targets.push_back(target);
    terms.push_back(g.pick(g.log_softmax(step.logits), static_cast<std::size_t>(target)));
    state = step.state;
    if (j > n) break;

    const TokenId truth = tgt[j - 1];
    if (options.forced_contexts) {
      context = (*options.forced_contexts)[j - 1];
    } else if (options.mode == OracleMode::None) {
      context = truth;
    } else {
      const TokenId oracle = is_word_mode(options.mode) ? word_oracle(g.value(step.logits), noise)
                                                        : (*options.sentence_oracle)[j - 1];
      r.oracles.push_back(oracle);
      context = sample_context(truth, oracle, options.p, rngs.sample);
    }
  }
  const Expr loss = g.scale(g.sum(g.concat(terms)), -1.0);
  r.loss = grads ? g.evaluate_and_backward(loss) : g.value(loss)[0];
  r.predictions = n + 1;
  return r;
}

// ---- metrics file ---------------------------------------------------------------

std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  char bleu[64] = "";
  if (row.val_bleu) std::snprintf(bleu, sizeof bleu, "%.4f", *row.val_bleu);
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%s,%.3f", row.epoch, row.batch, row.loss_per_token,
                row.p_truth, bleu, row.seconds);
  return buf;
}

MetricsRow parse_metrics_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 6) throw Error("metrics: malformed row '" + line + "'");
  MetricsRow r;
  try {
    r.epoch = std::stoull(f[0]);
    r.batch = std::stoull(f[1]);
    r.loss_per_token = std::stod(f[2]);
    r.p_truth = std::stod(f[3]);
    if (!f[4].empty()) r.val_bleu = std::stod(f[4]);
    r.seconds = std::stod(f[5]);
  } catch (const std::logic_error&) {
    throw Error("metrics: malformed row '" + line + "'");
  }
  return r;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != kMetricsHeader) throw Error("metrics '" + path + "': bad header");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) rows.push_back(parse_metrics_row(lines[i]));
  return rows;
}

// ---- decoding / evaluation ------------------------------------------------------

std::size_t decode_threads() {
  if (const char* env = std::getenv("ORSEQ_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(decode_threads(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::vector<TokenId>> decode_all(const ModelParams& params,
                                             const std::vector<std::vector<TokenId>>& sources,
                                             std::size_t beam, std::size_t max_len) {
  std::vector<std::vector<TokenId>> out(sources.size());
  parallel_for(sources.size(), [&](std::size_t i) {
    if (!sources[i].empty()) out[i] = translate(params, sources[i], beam, max_len);
  });
  return out;
}

std::vector<TokenId> encode_reference(const Vocabulary& vocab, std::string_view line) {
  std::vector<TokenId> out;
  std::unordered_map<std::string, TokenId> unknown;
  for (const auto& tok : split_tokens(line)) {
    if (vocab.contains(tok)) {
      out.push_back(vocab.id(tok));
    } else {
      auto [it, inserted] = unknown.try_emplace(tok, -1 - static_cast<TokenId>(unknown.size()));
      out.push_back(it->second);
    }
  }
  return out;
}

EvalResult evaluate(const ModelParams& params, const std::vector<std::vector<TokenId>>& sources,
                    const std::vector<std::vector<TokenId>>& references, std::size_t beam) {
  if (sources.size() != references.size())
    throw Error("evaluate: " + std::to_string(sources.size()) + " sources but " +
                std::to_string(references.size()) + " references");
  EvalResult r;
  r.hypotheses = decode_all(params, sources, beam);
  r.bleu = corpus_bleu(r.hypotheses, references);
  return r;
}

// ---- model files ------------------------------------------------------------------

namespace {

std::vector<std::string> non_reserved(const Vocabulary& v) {
  return {v.tokens().begin() + static_cast<std::ptrdiff_t>(kNumReserved), v.tokens().end()};
}

nlohmann::json model_json(const Model& m) {
  return {{"format", "orseq-model"},
          {"dims", dims_to_json(m.params.dims)},
          {"train", m.config.to_json()},
          {"src_vocab", non_reserved(m.src_vocab)},
          {"tgt_vocab", non_reserved(m.tgt_vocab)}};
}

Model model_from(const Checkpoint& ckpt, const std::string& prefix) {
  const auto& c = ckpt.config;
  Model m;
  try {
    const ModelDims dims = dims_from_json(c.at("dims"));
    m.config = TrainConfig::from_json(c.at("train"));
    m.src_vocab = Vocabulary::from_tokens(c.at("src_vocab").get<std::vector<std::string>>());
    m.tgt_vocab = Vocabulary::from_tokens(c.at("tgt_vocab").get<std::vector<std::string>>());
    if (m.src_vocab.size() != dims.src_vocab || m.tgt_vocab.size() != dims.tgt_vocab)
      throw Error("vocabulary sizes disagree with model dims");
    if (dims.embed != m.config.embed || dims.hidden != m.config.hidden)
      throw Error("model dims disagree with training config");
    m.params = read_params(ckpt, dims, prefix);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint config: ") + e.what());
  }
  return m;
}

}  // namespace

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ckpt;
  ckpt.config = model_json(model);
  add_params(ckpt, model.params);
  return ckpt;
}

Model load_model(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  try {
    return model_from(ckpt, "");
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

// ---- trainer ------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, TrainData data, std::string out_dir)
    : config_(std::move(config)), data_(std::move(data)), out_dir_(std::move(out_dir)) {
  config_.validate();
  if (data_.train.empty()) throw Error("trainer: no training pairs");
  if (data_.valid.empty()) throw Error("trainer: no validation pairs");
  const ModelDims dims{data_.src_vocab.size(), data_.tgt_vocab.size(), config_.embed, config_.hidden};
  Rng init = Rng::derive(config_.seed, {0x494e4954ULL /* "INIT" */});
  params_ = init_params(init, dims);
  best_params_ = params_;
  opt_ = OptState::zeros_like(params_);
  if (!out_dir_.empty()) fs::create_directories(out_dir_);
}

bool Trainer::finished() const {
  if (next_epoch_ >= config_.epochs) return true;
  return config_.patience > 0 && bad_epochs_ >= config_.patience;
}

Model Trainer::as_model(const ModelParams& params) const {
  return {params, data_.src_vocab, data_.tgt_vocab, config_};
}

void Trainer::save_state() const {
  if (out_dir_.empty()) return;
  Checkpoint last = model_checkpoint(as_model(params_));
  last.config["state"] = {{"next_epoch", next_epoch_},
                          {"best_bleu", best_bleu_},
                          {"best_epoch", best_epoch_},
                          {"bad_epochs", bad_epochs_},
                          {"elapsed", elapsed_}};
  add_params(last, best_params_, "best.");
  const auto names = params_.named();
  for (std::size_t k = 0; k < names.size(); ++k) {
    last.arrays.emplace_back("opt.sq_grad." + names[k].first, opt_.sq_grad[k]);
    last.arrays.emplace_back("opt.sq_delta." + names[k].first, opt_.sq_delta[k]);
  }
  save_checkpoint((fs::path(out_dir_) / "last.ckpt").string(), last);
}

void Trainer::resume() {
  if (out_dir_.empty()) throw Error("resume: trainer has no output directory");
  const std::string path = (fs::path(out_dir_) / "last.ckpt").string();
  const Checkpoint ckpt = load_checkpoint(path);
  const Model m = model_from(ckpt, "");
  if (!(m.src_vocab == data_.src_vocab) || !(m.tgt_vocab == data_.tgt_vocab))
    throw Error(path + ": vocabularies differ from the current run");
  if (m.config.to_json() != config_.to_json()) throw Error(path + ": training configuration differs");
  params_ = m.params;
  best_params_ = read_params(ckpt, params_.dims, "best.");
  const auto names = params_.named();
  for (std::size_t k = 0; k < names.size(); ++k) {
    opt_.sq_grad[k] = ckpt.array("opt.sq_grad." + names[k].first);
    opt_.sq_delta[k] = ckpt.array("opt.sq_delta." + names[k].first);
  }
  const auto& st = ckpt.config.at("state");
  next_epoch_ = st.at("next_epoch").get<std::size_t>();
  best_bleu_ = st.at("best_bleu").get<double>();
  best_epoch_ = st.at("best_epoch").get<std::size_t>();
  bad_epochs_ = st.at("bad_epochs").get<std::size_t>();
  elapsed_ = st.at("elapsed").get<double>();

  // keep metrics of completed epochs only
  const std::string metrics = (fs::path(out_dir_) / "metrics.csv").string();
  rows_.clear();
  if (fs::exists(metrics))
    for (auto& r : read_metrics(metrics))
      if (r.epoch < next_epoch_) rows_.push_back(r);
  std::vector<std::string> lines{kMetricsHeader};
  for (const auto& r : rows_) lines.push_back(format_metrics_row(r));
  write_lines(metrics, lines);
}

void Trainer::train_batch(const Batch& batch, std::size_t epoch, std::size_t batch_index, double p,
                          double& loss_sum, std::size_t& tokens) {
  std::vector<std::vector<TokenId>> oracles(batch.size());
  if (is_sentence_mode(config_.oracle)) {
    parallel_for(batch.size(), [&](std::size_t i) {
      Rng noise_rng = Rng::derive(config_.seed, {epoch, batch_index, i, 4});
      std::optional<GumbelConfig> noise;
      if (uses_noise(config_.oracle)) noise = GumbelConfig{config_.tau, &noise_rng};
      const auto result = sentence_oracle(params_, batch[i].src, batch[i].tgt, config_.oracle_beam, noise);
      oracles[i] = result.candidates[result.chosen].tokens;
    });
  }

  ModelParams grads = ModelParams::zeros(params_.dims);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SentenceRngs rngs = SentenceRngs::derive(config_.seed, epoch, batch_index, i);
    StepLossOptions opts;
    opts.mode = config_.oracle;
    opts.p = p;
    opts.tau = config_.tau;
    opts.dropout = config_.dropout;
    if (is_sentence_mode(config_.oracle)) opts.sentence_oracle = &oracles[i];
    const auto r = step_loss(params_, &grads, batch[i], opts, rngs);
    loss_sum += r.loss;
    tokens += r.predictions;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& [name, t] : grads.named())
    for (auto& v : t->values()) v *= inv;
  clip_gradients(grads, config_.clip_norm);
  if (config_.optimizer == OptimizerKind::Adadelta)
    adadelta_update(params_, grads, opt_, config_.rho, config_.eps);
  else
    sgd_update(params_, grads, config_.lr);
}

bool Trainer::run_epoch() {
  if (finished()) return false;
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto now_seconds = [&] {
    if (!config_.record_time) return 0.0;
    return elapsed_ + std::chrono::duration<double>(clock::now() - start).count();
  };

  const std::size_t epoch = next_epoch_;
  const double p = config_.oracle == OracleMode::None ? 1.0 : truth_prob({config_.mu, epoch});
  const auto batches = batch_iter(data_.train, config_.batch_size, config_.seed, epoch);

  std::vector<MetricsRow> rows;
  double epoch_loss = 0.0;
  std::size_t epoch_tokens = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    double loss = 0.0;
    std::size_t tokens = 0;
    train_batch(batches[b], epoch, b, p, loss, tokens);
    epoch_loss += loss;
    epoch_tokens += tokens;
    rows.push_back({epoch, b, loss / static_cast<double>(tokens), p, std::nullopt, now_seconds()});
  }

  std::vector<std::vector<TokenId>> sources, refs;
  for (const auto& pair : data_.valid) {
    sources.push_back(pair.src);
    refs.push_back(pair.tgt);
  }
  const double bleu = evaluate(params_, sources, refs, config_.valid_beam).bleu;
  rows.back().val_bleu = bleu * 100.0;
  rows.back().seconds = now_seconds();

  if (bleu > best_bleu_) {
    best_bleu_ = bleu;
    best_epoch_ = epoch;
    best_params_ = params_;
    bad_epochs_ = 0;
    if (!out_dir_.empty())
      save_checkpoint((fs::path(out_dir_) / "best.ckpt").string(), model_checkpoint(as_model(best_params_)));
  } else {
    ++bad_epochs_;
  }
  elapsed_ = config_.record_time ? rows.back().seconds : 0.0;
  ++next_epoch_;

  if (!out_dir_.empty()) {
    const std::string metrics = (fs::path(out_dir_) / "metrics.csv").string();
    std::ofstream out(metrics, epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!out) throw Error("cannot write '" + metrics + "'");
    if (epoch == 0) out << kMetricsHeader << '\n';
    for (const auto& r : rows) out << format_metrics_row(r) << '\n';
  }
  rows_.insert(rows_.end(), rows.begin(), rows.end());
  const EpochSummary summary{epoch, p, epoch_loss / static_cast<double>(epoch_tokens), bleu};
  epochs_.push_back(summary);
  save_state();
  if (on_epoch) on_epoch(summary);
  return !finished();
}

void Trainer::run() {
  while (run_epoch()) {
  }
}

}  // namespace orseq
