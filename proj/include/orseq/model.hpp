#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "orseq/data.hpp"
#include "orseq/graph.hpp"
#include "orseq/rng.hpp"
#include "orseq/tensor.hpp"

namespace orseq {

struct ModelDims {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed = 64;
  std::size_t hidden = 64;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// One GRU cell. Gates are stacked [update; reset; candidate]:
///   a      = input_w · x + bias                          (3H)
///   [z; r] = sigmoid(a[0:2H] + gates_u · h)
///   h~     = tanh(a[2H:3H] + cand_u · (r ⊙ h))
///   h'     = h + z ⊙ (h~ - h)
struct GruParams {
  Tensor input_w;  // 3H × in
  Tensor bias;     // 3H
  Tensor gates_u;  // 2H × H
  Tensor cand_u;   // H × H
};

/// All learnable arrays of the encoder-decoder.
///
/// Decoder step j (y = previous target word, s = previous decoder state):
///   s~_j  = GRU1(e_y, s_{j-1})
///   r_ij  = v_a · tanh(W_a s~_j + U_a h_i),  alpha_j = softmax(r_j)
///   c_j   = sum_i alpha_ij h_i
///   s_j   = GRU2(c_j, s~_j)
///   t_j   = tanh(W_t [e_y; c_j; s_j] + b_t)        (dropout applies here)
///   o_j   = W_o t_j
/// with s_0 = tanh(W_init · mean_i(h_i) + b_init).
struct ModelParams {
  ModelDims dims;
  Tensor src_embed;   // |Vs| × E
  Tensor tgt_embed;   // |Vt| × E
  GruParams enc_fwd;  // in = E
  GruParams enc_bwd;  // in = E
  Tensor init_w;      // H × 2H
  Tensor init_b;      // H
  GruParams dec_gru1; // in = E
  Tensor att_w;       // H × H
  Tensor att_u;       // H × 2H
  Tensor att_v;       // H
  GruParams dec_gru2; // in = 2H
  Tensor readout_w;   // E × (E + 3H)
  Tensor readout_b;   // E
  Tensor out_w;       // |Vt| × E

  /// Correctly shaped, all zeros. Also serves as a gradient accumulator.
  static ModelParams zeros(const ModelDims& dims);

  /// Every array with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  std::size_t parameter_count() const;
};

/// Every value drawn from U(-scale, scale); the default matches the usual
/// [-0.1, 0.1] initialization.
ModelParams init_params(Rng& rng, const ModelDims& dims, double scale = 0.1);

struct EncoderAnnotations {
  Tensor h;     // |x| × 2H, row i = [forward_i; backward_i]
  Tensor keys;  // |x| × H, row i = U_a h_i (cached for attention)
  std::size_t length() const { return h.rows(); }
};

struct DecoderState {
  Tensor s;        // output of GRU2
  Tensor s_tilde;  // output of GRU1
};

struct AttentionResult {
  Tensor alpha;    // |x|
  Tensor context;  // 2H
};

struct StepResult {
  DecoderState state;
  Tensor logits;  // |Vt|
};

EncoderAnnotations encode(const ModelParams& params, std::span<const TokenId> src);
DecoderState initial_state(const ModelParams& params, const EncoderAnnotations& annotations);
AttentionResult attention(const ModelParams& params, const Tensor& query,
                          const EncoderAnnotations& annotations);
/// One decoding step; a pure function of its arguments (no dropout).
StepResult decoder_step(const ModelParams& params, TokenId y_prev, const DecoderState& state,
                        const EncoderAnnotations& annotations);

/// Graph-level forms of the operations above, for training. Parameters are
/// bound once per graph; when `grads` is given, backward() accumulates into
/// the matching arrays of `grads`.
class Seq2SeqGraph {
 public:
  struct Annotations {
    Expr h;
    Expr h_t;   // transpose of h
    Expr keys;
    std::size_t length = 0;
  };
  struct State {
    Expr s;
    Expr s_tilde;
  };
  struct Attention {
    Expr alpha;
    Expr context;
  };
  struct Step {
    State state;
    Expr logits;
    Expr alpha;
  };

  Seq2SeqGraph(Graph& graph, const ModelParams& params, ModelParams* grads = nullptr);

  Graph& graph() { return graph_; }

  Annotations encode(std::span<const TokenId> src);
  /// Binds precomputed annotations (no gradient flows into them).
  Annotations bind(const EncoderAnnotations& annotations);
  State initial_state(const Annotations& annotations);
  State bind(const DecoderState& state);
  Attention attend(Expr query, const Annotations& annotations);
  /// `dropout_mask`, when given, multiplies the readout t_j elementwise.
  Step decoder_step(TokenId y_prev, const State& state, const Annotations& annotations,
                    const Tensor* dropout_mask = nullptr);

 private:
  Expr p(const Tensor& t);
  Expr gru(const GruParams& cell, Expr x, Expr h);
  Expr embed(const Tensor& table, TokenId id, const char* what);

  Graph& graph_;
  const ModelParams& params_;
  std::unordered_map<const Tensor*, Tensor*> sinks_;
};

}  // namespace orseq
