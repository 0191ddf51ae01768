#include "orseq/model.hpp"

namespace orseq {

namespace {

GruParams gru_zeros(std::size_t in, std::size_t hidden) {
  return {Tensor({3 * hidden, in}), Tensor({3 * hidden}), Tensor({2 * hidden, hidden}),
          Tensor({hidden, hidden})};
}

template <typename Self, typename Ptr>
std::vector<std::pair<std::string, Ptr>> named_impl(Self& m) {
  std::vector<std::pair<std::string, Ptr>> out;
  auto add = [&](const char* name, auto& t) { out.emplace_back(name, &t); };
  auto add_gru = [&](const std::string& prefix, auto& g) {
    out.emplace_back(prefix + ".input_w", &g.input_w);
    out.emplace_back(prefix + ".bias", &g.bias);
    out.emplace_back(prefix + ".gates_u", &g.gates_u);
    out.emplace_back(prefix + ".cand_u", &g.cand_u);
  };
  add("src_embed", m.src_embed);
  add("tgt_embed", m.tgt_embed);
  add_gru("enc_fwd", m.enc_fwd);
  add_gru("enc_bwd", m.enc_bwd);
  add("init_w", m.init_w);
  add("init_b", m.init_b);
  add_gru("dec_gru1", m.dec_gru1);
  add("att_w", m.att_w);
  add("att_u", m.att_u);
  add("att_v", m.att_v);
  add_gru("dec_gru2", m.dec_gru2);
  add("readout_w", m.readout_w);
  add("readout_b", m.readout_b);
  add("out_w", m.out_w);
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelDims& dims) {
  if (!dims.src_vocab || !dims.tgt_vocab || !dims.embed || !dims.hidden)
    throw Error("model: dimensions and vocabulary sizes must be positive");
  const std::size_t E = dims.embed, H = dims.hidden;
  ModelParams m;
  m.dims = dims;
  m.src_embed = Tensor({dims.src_vocab, E});
  m.tgt_embed = Tensor({dims.tgt_vocab, E});
  m.enc_fwd = gru_zeros(E, H);
  m.enc_bwd = gru_zeros(E, H);
  m.init_w = Tensor({H, 2 * H});
  m.init_b = Tensor({H});
  m.dec_gru1 = gru_zeros(E, H);
  m.att_w = Tensor({H, H});
  m.att_u = Tensor({H, 2 * H});
  m.att_v = Tensor({H});
  m.dec_gru2 = gru_zeros(2 * H, H);
  m.readout_w = Tensor({E, E + 3 * H});
  m.readout_b = Tensor({E});
  m.out_w = Tensor({dims.tgt_vocab, E});
  return m;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  return named_impl<ModelParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  return named_impl<const ModelParams, const Tensor*>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

ModelParams init_params(Rng& rng, const ModelDims& dims, double scale) {
  ModelParams m = ModelParams::zeros(dims);
  for (auto& [name, t] : m.named())
    for (auto& v : t->values()) v = rng.uniform(-scale, scale);
  return m;
}

// ---- graph form -------------------------------------------------------------

Seq2SeqGraph::Seq2SeqGraph(Graph& graph, const ModelParams& params, ModelParams* grads)
    : graph_(graph), params_(params) {
  if (grads) {
    auto src = params.named();
    auto dst = grads->named();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i].second->shape() != dst[i].second->shape())
        throw ShapeError("gradient sink " + src[i].first, src[i].second->shape(), dst[i].second->shape());
      sinks_.emplace(src[i].second, dst[i].second);
    }
  }
}

Expr Seq2SeqGraph::p(const Tensor& t) {
  auto it = sinks_.find(&t);
  return graph_.parameter(t, it == sinks_.end() ? nullptr : it->second);
}

Expr Seq2SeqGraph::embed(const Tensor& table, TokenId id, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
    throw Error(std::string(what) + ": token id " + std::to_string(id) + " outside vocabulary of size " +
                std::to_string(table.rows()));
  auto it = sinks_.find(&table);
  return graph_.lookup(table, static_cast<std::size_t>(id), it == sinks_.end() ? nullptr : it->second);
}

Expr Seq2SeqGraph::gru(const GruParams& cell, Expr x, Expr h) {
  Graph& g = graph_;
  const std::size_t H = cell.cand_u.rows();
  Expr a = g.add(g.matmul(p(cell.input_w), x), p(cell.bias));
  Expr zr = g.sigmoid(g.add(g.slice(a, 0, 2 * H), g.matmul(p(cell.gates_u), h)));
  Expr z = g.slice(zr, 0, H);
  Expr r = g.slice(zr, H, H);
  Expr cand = g.tanh(g.add(g.slice(a, 2 * H, H), g.matmul(p(cell.cand_u), g.mul(r, h))));
  return g.add(h, g.mul(z, g.sub(cand, h)));
}

Seq2SeqGraph::Annotations Seq2SeqGraph::encode(std::span<const TokenId> src) {
  if (src.empty()) throw Error("encode: empty source sentence");
  Graph& g = graph_;
  const std::size_t n = src.size();
  const std::size_t H = params_.dims.hidden;
  std::vector<Expr> emb(n);
  for (std::size_t i = 0; i < n; ++i) emb[i] = embed(params_.src_embed, src[i], "encode");

  std::vector<Expr> fwd(n), bwd(n);
  Expr h = g.constant(Tensor({H}));
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = gru(params_.enc_fwd, emb[i], h);
  h = g.constant(Tensor({H}));
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = gru(params_.enc_bwd, emb[i], h);

  std::vector<Expr> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = g.concat({fwd[i], bwd[i]});
  Annotations a;
  a.h = g.stack_rows(rows);
  a.h_t = g.transpose(a.h);
  a.keys = g.matmul(a.h, g.transpose(p(params_.att_u)));
  a.length = n;
  return a;
}

Seq2SeqGraph::Annotations Seq2SeqGraph::bind(const EncoderAnnotations& annotations) {
  Annotations a;
  a.h = graph_.parameter(annotations.h);
  a.h_t = graph_.transpose(a.h);
  a.keys = graph_.parameter(annotations.keys);
  a.length = annotations.length();
  return a;
}

Seq2SeqGraph::State Seq2SeqGraph::initial_state(const Annotations& annotations) {
  Graph& g = graph_;
  const auto n = annotations.length;
  Expr mean = g.matmul(annotations.h_t, g.constant(Tensor({n}, 1.0 / static_cast<double>(n))));
  Expr s0 = g.tanh(g.add(g.matmul(p(params_.init_w), mean), p(params_.init_b)));
  return {s0, s0};
}

Seq2SeqGraph::State Seq2SeqGraph::bind(const DecoderState& state) {
  return {graph_.constant(state.s), graph_.constant(state.s_tilde)};
}

Seq2SeqGraph::Attention Seq2SeqGraph::attend(Expr query, const Annotations& annotations) {
  Graph& g = graph_;
  Expr q = g.matmul(p(params_.att_w), query);
  Expr scores = g.matmul(g.tanh(g.add(annotations.keys, q)), p(params_.att_v));
  Expr alpha = g.softmax(scores);
  return {alpha, g.matmul(annotations.h_t, alpha)};
}

Seq2SeqGraph::Step Seq2SeqGraph::decoder_step(TokenId y_prev, const State& state,
                                              const Annotations& annotations,
                                              const Tensor* dropout_mask) {
  Graph& g = graph_;
  Expr e = embed(params_.tgt_embed, y_prev, "decoder_step");
  Expr s_tilde = gru(params_.dec_gru1, e, state.s);
  Attention att = attend(s_tilde, annotations);
  Expr s = gru(params_.dec_gru2, att.context, s_tilde);
  Expr t = g.tanh(g.add(g.matmul(p(params_.readout_w), g.concat({e, att.context, s})), p(params_.readout_b)));
  if (dropout_mask) t = g.mul(t, g.constant(*dropout_mask));
  Expr logits = g.matmul(p(params_.out_w), t);
  return {{s, s_tilde}, logits, att.alpha};
}

// ---- value form -------------------------------------------------------------

EncoderAnnotations encode(const ModelParams& params, std::span<const TokenId> src) {
  Graph g;
  Seq2SeqGraph m(g, params);
  auto a = m.encode(src);
  return {g.value(a.h), g.value(a.keys)};
}

DecoderState initial_state(const ModelParams& params, const EncoderAnnotations& annotations) {
  Graph g;
  Seq2SeqGraph m(g, params);
  auto s = m.initial_state(m.bind(annotations));
  return {g.value(s.s), g.value(s.s_tilde)};
}

AttentionResult attention(const ModelParams& params, const Tensor& query,
                          const EncoderAnnotations& annotations) {
  if (query.rank() != 1 || query.size() != params.dims.hidden)
    throw ShapeError("attention", query.shape(), Shape{params.dims.hidden});
  Graph g;
  Seq2SeqGraph m(g, params);
  auto att = m.attend(g.constant(query), m.bind(annotations));
  return {g.value(att.alpha), g.value(att.context)};
}

StepResult decoder_step(const ModelParams& params, TokenId y_prev, const DecoderState& state,
                        const EncoderAnnotations& annotations) {
  Graph g;
  Seq2SeqGraph m(g, params);
  auto step = m.decoder_step(y_prev, m.bind(state), m.bind(annotations));
  return {{g.value(step.state.s), g.value(step.state.s_tilde)}, g.value(step.logits)};
}

}  // namespace orseq
