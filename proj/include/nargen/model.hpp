#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nargen/adam.hpp"
#include "nargen/batch.hpp"
#include "nargen/ops.hpp"
#include "nargen/tape.hpp"
#include "nargen/tensor.hpp"

namespace nargen {

// Decoder-only transformer with a switchable attention mask: bidirectional
// for the denoising model, causal for the sequential baseline. PAD positions
// are ordinary vocabulary citizens and are attended to; emitting PAD is how
// the model expresses output length.
struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  int vocab = 0;
  int max_seq = 128;
  AttentionMode attention = AttentionMode::bidirectional;
  double dropout = 0.0;

  void validate() const {
    if (layers < 1) throw ContractError("ModelConfig: layers must be >= 1");
    if (hidden < 1 || ffn < 1) throw ContractError("ModelConfig: hidden/ffn must be >= 1");
    if (heads < 1 || hidden % heads != 0) {
      throw ContractError("ModelConfig: hidden must be divisible by heads");
    }
    if (vocab < 2) throw ContractError("ModelConfig: vocab must be >= 2 (PAD and MASK)");
    if (max_seq < 1) throw ContractError("ModelConfig: max_seq must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ContractError("ModelConfig: dropout in [0,1)");
  }
};

inline constexpr double kInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-6;

template <typename Scalar>
struct LayerParams {
  Tensor<Scalar> ln1_gamma, ln1_beta;
  Tensor<Scalar> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<Scalar> ln2_gamma, ln2_beta;
  Tensor<Scalar> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// All learnable tensors. The token embedding doubles as the output head.
template <typename Scalar>
struct ModelParams {
  Tensor<Scalar> tok_emb;  // [V, d]
  Tensor<Scalar> pos_emb;  // [max_seq, d]
  std::vector<LayerParams<Scalar>> layers;
  Tensor<Scalar> final_gamma, final_beta;

  // Visits every tensor with a stable name; the order is fixed and shared by
  // the optimizer, checkpointing and gradient bookkeeping.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("tok_emb", self.tok_emb);
    fn("pos_emb", self.pos_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& lay = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      fn(p + "ln1.gamma", lay.ln1_gamma);
      fn(p + "ln1.beta", lay.ln1_beta);
      fn(p + "attn.wq", lay.wq);
      fn(p + "attn.bq", lay.bq);
      fn(p + "attn.wk", lay.wk);
      fn(p + "attn.bk", lay.bk);
      fn(p + "attn.wv", lay.wv);
      fn(p + "attn.bv", lay.bv);
      fn(p + "attn.wo", lay.wo);
      fn(p + "attn.bo", lay.bo);
      fn(p + "ln2.gamma", lay.ln2_gamma);
      fn(p + "ln2.beta", lay.ln2_beta);
      fn(p + "ffn.w1", lay.ffn_w1);
      fn(p + "ffn.b1", lay.ffn_b1);
      fn(p + "ffn.w2", lay.ffn_w2);
      fn(p + "ffn.b2", lay.ffn_b2);
    }
    fn("final_ln.gamma", self.final_gamma);
    fn("final_ln.beta", self.final_beta);
  }

  template <typename Fn>
  void for_each_named(Fn&& fn) {
    visit(*this, std::forward<Fn>(fn));
  }
  template <typename Fn>
  void for_each_named(Fn&& fn) const {
    visit(*this, std::forward<Fn>(fn));
  }

  std::vector<Tensor<Scalar>*> tensor_list() {
    std::vector<Tensor<Scalar>*> out;
    for_each_named([&](const std::string&, Tensor<Scalar>& t) { out.push_back(&t); });
    return out;
  }
  std::vector<const Tensor<Scalar>*> tensor_list() const {
    std::vector<const Tensor<Scalar>*> out;
    for_each_named([&](const std::string&, const Tensor<Scalar>& t) { out.push_back(&t); });
    return out;
  }

  std::int64_t count() const {
    std::int64_t n = 0;
    for_each_named([&](const std::string&, const Tensor<Scalar>& t) { n += t.size(); });
    return n;
  }
};

// Closed-form parameter count; kept in lockstep with init_params and checked
// against it in tests.
inline std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.hidden, dff = cfg.ffn;
  const std::int64_t embed = static_cast<std::int64_t>(cfg.vocab) * d;
  const std::int64_t pos = static_cast<std::int64_t>(cfg.max_seq) * d;
  const std::int64_t attn = 4 * (d * d + d);
  const std::int64_t ffn = d * dff + dff + dff * d + d;
  const std::int64_t norms = 4 * d;  // two layer norms per block
  const std::int64_t per_layer = attn + ffn + norms;
  return embed + pos + cfg.layers * per_layer + 2 * d;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Index d = cfg.hidden, dff = cfg.ffn;
  ModelParams<Scalar> p;
  p.tok_emb = Tensor<Scalar>(Shape{cfg.vocab, d});
  p.pos_emb = Tensor<Scalar>(Shape{cfg.max_seq, d});
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& lay : p.layers) {
    lay.ln1_gamma = Tensor<Scalar>(Shape{d});
    lay.ln1_beta = Tensor<Scalar>(Shape{d});
    lay.wq = Tensor<Scalar>(Shape{d, d});
    lay.bq = Tensor<Scalar>(Shape{d});
    lay.wk = Tensor<Scalar>(Shape{d, d});
    lay.bk = Tensor<Scalar>(Shape{d});
    lay.wv = Tensor<Scalar>(Shape{d, d});
    lay.bv = Tensor<Scalar>(Shape{d});
    lay.wo = Tensor<Scalar>(Shape{d, d});
    lay.bo = Tensor<Scalar>(Shape{d});
    lay.ln2_gamma = Tensor<Scalar>(Shape{d});
    lay.ln2_beta = Tensor<Scalar>(Shape{d});
    lay.ffn_w1 = Tensor<Scalar>(Shape{d, dff});
    lay.ffn_b1 = Tensor<Scalar>(Shape{dff});
    lay.ffn_w2 = Tensor<Scalar>(Shape{dff, d});
    lay.ffn_b2 = Tensor<Scalar>(Shape{d});
  }
  p.final_gamma = Tensor<Scalar>(Shape{d});
  p.final_beta = Tensor<Scalar>(Shape{d});

  // Weight matrices and embeddings ~ N(0, 0.02^2) on a stream keyed by the
  // tensor name; biases zero; norm gains one. Renaming a tensor is the only
  // thing that moves its init.
  p.for_each_named([&](const std::string& name, Tensor<Scalar>& t) {
    const bool is_gain = name.ends_with("gamma");
    const bool is_bias = name.ends_with("beta") || (name.find(".b") != std::string::npos &&
                                                    name.find(".beta") == std::string::npos);
    if (is_gain) {
      t = Tensor<Scalar>::full(t.shape(), Scalar(1));
    } else if (is_bias) {
      // already zero
    } else {
      Rng rng(stream_seed(seed, tag::init, fnv1a64(name)));
      for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.normal() * kInitStd);
    }
  });
  return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> dst;
  dst.tok_emb = Tensor<To>::cast_from(src.tok_emb);
  dst.pos_emb = Tensor<To>::cast_from(src.pos_emb);
  dst.layers.resize(src.layers.size());
  for (std::size_t l = 0; l < src.layers.size(); ++l) {
    const auto& a = src.layers[l];
    auto& b = dst.layers[l];
    b.ln1_gamma = Tensor<To>::cast_from(a.ln1_gamma);
    b.ln1_beta = Tensor<To>::cast_from(a.ln1_beta);
    b.wq = Tensor<To>::cast_from(a.wq);
    b.bq = Tensor<To>::cast_from(a.bq);
    b.wk = Tensor<To>::cast_from(a.wk);
    b.bk = Tensor<To>::cast_from(a.bk);
    b.wv = Tensor<To>::cast_from(a.wv);
    b.bv = Tensor<To>::cast_from(a.bv);
    b.wo = Tensor<To>::cast_from(a.wo);
    b.bo = Tensor<To>::cast_from(a.bo);
    b.ln2_gamma = Tensor<To>::cast_from(a.ln2_gamma);
    b.ln2_beta = Tensor<To>::cast_from(a.ln2_beta);
    b.ffn_w1 = Tensor<To>::cast_from(a.ffn_w1);
    b.ffn_b1 = Tensor<To>::cast_from(a.ffn_b1);
    b.ffn_w2 = Tensor<To>::cast_from(a.ffn_w2);
    b.ffn_b2 = Tensor<To>::cast_from(a.ffn_b2);
  }
  dst.final_gamma = Tensor<To>::cast_from(src.final_gamma);
  dst.final_beta = Tensor<To>::cast_from(src.final_beta);
  return dst;
}

// Tape handles for the parameters, in for_each_named order.
struct ParamVars {
  std::vector<Var> vars;
  std::vector<std::string> names;
};

template <typename Scalar>
ParamVars push_params(Tape<Scalar>& tape, const ModelParams<Scalar>& params) {
  ParamVars pv;
  params.for_each_named([&](const std::string& name, const Tensor<Scalar>& t) {
    pv.names.push_back(name);
    pv.vars.push_back(tape.leaf(t));
  });
  return pv;
}

// Optional train-time dropout; inactive when rate is zero or the plan is
// absent. Masks are keyed by (seed, site index), so a step is replayable.
struct DropoutPlan {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

// Maps tensor names to var handles for readable forward code.
template <typename Scalar>
class ParamLookup {
 public:
  ParamLookup(const ParamVars& pv) : pv_(pv) {}
  Var operator()(const std::string& name) const {
    for (std::size_t i = 0; i < pv_.names.size(); ++i) {
      if (pv_.names[i] == name) return pv_.vars[i];
    }
    throw ContractError("forward: unknown parameter " + name);
  }

 private:
  const ParamVars& pv_;
};

}  // namespace detail

// Forward pass over the tape: logits [B*S, V] at every position. Bidirectional
// mode lets every position attend everywhere; causal mode restricts position i
// to j <= i. The output head is the transposed token embedding.
template <typename Scalar>
Var forward_on_tape(Tape<Scalar>& tape, const ParamVars& pv, const ModelConfig& cfg,
                    const SequenceBatch& batch, AttentionMode mode,
                    const DropoutPlan* drop = nullptr) {
  cfg.validate();
  if (batch.seq_len > cfg.max_seq) {
    throw DimensionError("forward: sequence length " + std::to_string(batch.seq_len) +
                         " exceeds model max_seq " + std::to_string(cfg.max_seq));
  }
  for (std::int32_t id : batch.ids) {
    if (id < 0 || id >= cfg.vocab) {
      throw DimensionError("forward: token id " + std::to_string(id) + " outside vocab");
    }
  }
  const Index b = batch.rows, s = batch.seq_len;
  detail::ParamLookup<Scalar> P(pv);

  std::vector<std::int32_t> pos_ids(static_cast<std::size_t>(b * s));
  for (Index r = 0; r < b; ++r) {
    for (Index c = 0; c < s; ++c) pos_ids[static_cast<std::size_t>(r * s + c)] = static_cast<std::int32_t>(c);
  }
  Var x = add(tape, gather_rows(tape, P("tok_emb"), batch.ids), gather_rows(tape, P("pos_emb"), pos_ids));

  const double rate = drop ? drop->rate : 0.0;
  std::uint64_t site = 0;
  auto maybe_drop = [&](Var v) {
    if (rate <= 0.0) return v;
    return dropout(tape, v, rate, stream_seed(drop->seed, tag::dropout, site++));
  };

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Var h = layer_norm(tape, x, P(p + "ln1.gamma"), P(p + "ln1.beta"),
                       static_cast<Scalar>(kLayerNormEps));
    Var q = affine(tape, h, P(p + "attn.wq"), P(p + "attn.bq"));
    Var k = affine(tape, h, P(p + "attn.wk"), P(p + "attn.bk"));
    Var v = affine(tape, h, P(p + "attn.wv"), P(p + "attn.bv"));
    Var att = multi_head_attention(tape, q, k, v, b, s, cfg.heads, mode);
    x = add(tape, x, maybe_drop(affine(tape, att, P(p + "attn.wo"), P(p + "attn.bo"))));
    Var h2 = layer_norm(tape, x, P(p + "ln2.gamma"), P(p + "ln2.beta"),
                        static_cast<Scalar>(kLayerNormEps));
    Var f = gelu(tape, affine(tape, h2, P(p + "ffn.w1"), P(p + "ffn.b1")));
    x = add(tape, x, maybe_drop(affine(tape, f, P(p + "ffn.w2"), P(p + "ffn.b2"))));
  }
  Var xf = layer_norm(tape, x, P("final_ln.gamma"), P("final_ln.beta"),
                      static_cast<Scalar>(kLayerNormEps));
  return matmul_nt(tape, xf, P("tok_emb"));
}

// Inference forward: logits [B, S, V].
template <typename Scalar>
Tensor<Scalar> forward(const ModelParams<Scalar>& params, const ModelConfig& cfg,
                       const SequenceBatch& batch, AttentionMode mode) {
  Tape<Scalar> tape(/*grad_enabled=*/false);
  ParamVars pv = push_params(tape, params);
  Var logits = forward_on_tape(tape, pv, cfg, batch, mode);
  return tape.value(logits).reshaped(Shape{batch.rows, batch.seq_len, cfg.vocab});
}

template <typename Scalar>
Tensor<Scalar> forward(const ModelParams<Scalar>& params, const ModelConfig& cfg,
                       const SequenceBatch& batch) {
  return forward(params, cfg, batch, cfg.attention);
}

}  // namespace nargen
