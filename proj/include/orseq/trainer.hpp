#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orseq/checkpoint.hpp"
#include "orseq/data.hpp"
#include "orseq/model.hpp"
#include "orseq/oracle.hpp"
#include "orseq/rng.hpp"

namespace orseq {

enum class OptimizerKind { Sgd, Adadelta };

struct TrainConfig {
  std::size_t embed = 64;
  std::size_t hidden = 64;
  OracleMode oracle = OracleMode::None;
  double tau = 0.5;
  double mu = 12.0;
  std::size_t oracle_beam = 3;
  std::size_t epochs = 30;
  std::size_t batch_size = 80;
  OptimizerKind optimizer = OptimizerKind::Adadelta;
  double lr = 0.1;  // SGD only
  double rho = 0.95;
  double eps = 1e-6;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  std::size_t patience = 10;
  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t valid_beam = 10;
  std::size_t max_len = 50;  // training length filter
  bool record_time = true;   // false writes 0 in the seconds column

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are an error.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Per-parameter adadelta accumulators E[g^2] and E[dx^2], in
/// ModelParams::named() order.
struct OptState {
  std::vector<Tensor> sq_grad;
  std::vector<Tensor> sq_delta;

  static OptState zeros_like(const ModelParams& params);
};

/// One adadelta step for every element:
///   E[g^2]  = rho E[g^2] + (1 - rho) g^2
///   dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] = rho E[dx^2] + (1 - rho) dx^2
///   x      += dx
void adadelta_update(ModelParams& params, const ModelParams& grads, OptState& state, double rho, double eps);
void sgd_update(ModelParams& params, const ModelParams& grads, double lr);

/// Scales `grads` so the global L2 norm is at most `max_norm`. Returns the
/// norm before scaling.
double clip_gradients(ModelParams& grads, double max_norm);

/// Independent random streams used while computing one sentence's loss.
struct SentenceRngs {
  Rng sample;   // ground-truth / oracle Bernoulli draws
  Rng noise;    // Gumbel noise for word oracles
  Rng dropout;  // dropout masks

  static SentenceRngs derive(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch, std::uint64_t index);
};

struct StepLossOptions {
  OracleMode mode = OracleMode::None;
  double p = 1.0;        // probability of feeding the ground-truth word
  double tau = 0.5;      // Gumbel temperature for word-noise
  double dropout = 0.0;  // readout dropout rate; 0 disables
  /// Sentence modes: the oracle sentence, |tgt| tokens.
  const std::vector<TokenId>* sentence_oracle = nullptr;
  /// When set, these |tgt| tokens are fed as the contexts of steps 2..|tgt|+1
  /// and no oracle selection or sampling happens.
  const std::vector<TokenId>* forced_contexts = nullptr;
};

struct LossResult {
  double loss = 0.0;              // -sum_j log P_j[y*_j]
  std::size_t predictions = 0;    // |tgt| + 1
  std::vector<TokenId> contexts;  // word fed at each step; contexts[0] == BOS
  std::vector<TokenId> targets;   // word scored at each step; tgt then EOS
  std::vector<TokenId> oracles;   // oracle candidate at each step >= 2 (word/sentence modes)
};

/// Negative log-likelihood of one pair with oracle-sampled contexts.
///
/// Step 1 feeds BOS. For step j >= 2 the fed word is y*_{j-1} with
/// probability p and the oracle word otherwise; word oracles are read from
/// the logits of step j-1 of this same pass (including any dropout), sentence
/// oracles from `sentence_oracle`. The scored word is always the ground
/// truth. If `grads` is non-null the gradient is added into it; no gradient
/// flows through oracle selection or sampling.
LossResult step_loss(const ModelParams& params, ModelParams* grads, const SentencePair& pair,
                     const StepLossOptions& options, SentenceRngs& rngs);

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss_per_token = 0.0;
  double p_truth = 1.0;
  std::optional<double> val_bleu;  // BLEU x 100, epoch-final rows only
  double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,batch,loss_per_token,p_truth,val_bleu,seconds";
std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line);
std::vector<MetricsRow> read_metrics(const std::string& path);

/// Decodes every source with beam search (no noise, no dropout). An empty
/// source yields an empty hypothesis.
std::vector<std::vector<TokenId>> decode_all(const ModelParams& params,
                                             const std::vector<std::vector<TokenId>>& sources,
                                             std::size_t beam, std::size_t max_len = 0);

/// Maps reference words to ids; words missing from `vocab` get distinct
/// negative ids so they never match a hypothesis token (not even UNK).
std::vector<TokenId> encode_reference(const Vocabulary& vocab, std::string_view line);

struct EvalResult {
  double bleu = 0.0;  // in [0, 1]
  std::vector<std::vector<TokenId>> hypotheses;
};

EvalResult evaluate(const ModelParams& params, const std::vector<std::vector<TokenId>>& sources,
                    const std::vector<std::vector<TokenId>>& references, std::size_t beam);

/// Everything needed to run a model without the training corpora.
struct Model {
  ModelParams params;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  TrainConfig config;
};

Checkpoint model_checkpoint(const Model& model);
/// Loads a checkpoint and checks its arrays against the recorded dims and
/// vocabularies.
Model load_model(const std::string& path);

struct TrainData {
  std::vector<SentencePair> train;
  std::vector<SentencePair> valid;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double p_truth = 1.0;
  double loss_per_token = 0.0;
  double val_bleu = 0.0;  // [0, 1]
};

/// Epoch loop with validation-BLEU model selection.
///
/// With an output directory, writes metrics.csv (one row per batch),
/// best.ckpt (best validation BLEU so far) and last.ckpt (everything needed
/// to resume) after every epoch.
class Trainer {
 public:
  Trainer(TrainConfig config, TrainData data, std::string out_dir = "");

  /// Restores parameters, optimizer and loop state from `out_dir`/last.ckpt.
  void resume();

  /// Runs until the epoch limit or until `patience` epochs pass without a
  /// validation improvement.
  void run();
  /// Runs one epoch; returns false once training is over.
  bool run_epoch();

  const ModelParams& params() const { return params_; }
  const ModelParams& best_params() const { return best_params_; }
  double best_bleu() const { return best_bleu_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_done() const { return next_epoch_; }
  const std::vector<MetricsRow>& rows() const { return rows_; }
  const std::vector<EpochSummary>& epochs() const { return epochs_; }
  bool finished() const;

  /// Optional per-epoch callback (progress reporting).
  std::function<void(const EpochSummary&)> on_epoch;

 private:
  void train_batch(const Batch& batch, std::size_t epoch, std::size_t batch_index, double p,
                   double& loss_sum, std::size_t& tokens);
  void save_state() const;
  Model as_model(const ModelParams& params) const;

  TrainConfig config_;
  TrainData data_;
  std::string out_dir_;
  ModelParams params_;
  ModelParams best_params_;
  OptState opt_;
  std::size_t next_epoch_ = 0;
  double best_bleu_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double elapsed_ = 0.0;
  std::vector<MetricsRow> rows_;
  std::vector<EpochSummary> epochs_;
};

/// Number of decoding threads: ORSEQ_THREADS if set and positive, else the
/// hardware concurrency.
std::size_t decode_threads();

/// Runs fn(i) for i in [0, n) over up to decode_threads() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace orseq
