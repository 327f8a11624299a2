/* Copyright 2026 The conpono-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Post-layer-norm transformer encoder with a tanh pooler, a tied
// masked-token head, a 2-way pair classifier, and one scoring head per
// signed distance.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "conpono/nn/ops.hpp"
#include "conpono/nn/params.hpp"
#include "conpono/sampler.hpp"

namespace conpono {

/// How anchor and candidate reach the encoder.
///  combined: t = g(anchor, candidate), c = g(anchor)
///  isolated: t = g(candidate),         c = g(anchor)
///  uni:      t = g(anchor, candidate), no c; heads are vectors
enum class Coupling { kCombined, kIsolated, kUni };

inline std::string coupling_name(Coupling c) {
  switch (c) {
    case Coupling::kCombined: return "combined";
    case Coupling::kIsolated: return "isolated";
    case Coupling::kUni: return "uni";
  }
  return "?";
}
inline Coupling coupling_from_name(const std::string& s) {
  if (s == "combined") return Coupling::kCombined;
  if (s == "isolated") return Coupling::kIsolated;
  if (s == "uni") return Coupling::kUni;
  fail("unknown coupling \"", s, "\" (expected combined, isolated or uni)");
}

struct EncoderConfig {
  int layers = 2;
  int hidden = 128;
  int heads = 4;
  int intermediate = 512;
  int vocab_size = 0;
  int max_positions = 128;
  Coupling coupling = Coupling::kCombined;
  int K = 4;
  double dropout = 0.1;
  double init_std = 0.02;

  void validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || intermediate < 1)
      fail("encoder: layers/hidden/heads/intermediate must be positive");
    if (hidden % heads != 0) fail("encoder: hidden ", hidden, " not divisible by heads ", heads);
    if (vocab_size <= kNumSpecials) fail("encoder: vocab_size must exceed the 5 specials, got ", vocab_size);
    if (max_positions < 5) fail("encoder: max_positions must be >= 5");
    if (K < 1) fail("encoder: K must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) fail("encoder: dropout must lie in [0,1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"layers", c.layers},
       {"hidden", c.hidden},
       {"heads", c.heads},
       {"intermediate", c.intermediate},
       {"vocab_size", c.vocab_size},
       {"max_positions", c.max_positions},
       {"coupling", coupling_name(c.coupling)},
       {"K", c.K},
       {"dropout", c.dropout},
       {"init_std", c.init_std}};
}
inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("layers").get_to(c.layers);
  j.at("hidden").get_to(c.hidden);
  j.at("heads").get_to(c.heads);
  j.at("intermediate").get_to(c.intermediate);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_positions").get_to(c.max_positions);
  c.coupling = coupling_from_name(j.at("coupling").get<std::string>());
  j.at("K").get_to(c.K);
  if (j.contains("dropout")) j.at("dropout").get_to(c.dropout);
  if (j.contains("init_std")) j.at("init_std").get_to(c.init_std);
}

/// Position of distance k among the 2K heads: -K..-1 then 1..K.
inline std::size_t head_slot(int k, int K) {
  if (k == 0 || std::abs(k) > K) fail("distance k=", k, " outside {-", K, "..-1, 1..", K, "}");
  return static_cast<std::size_t>(k < 0 ? k + K : k + K - 1);
}

template <class T>
class EncoderParams {
 public:
  struct Layer {
    std::size_t q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, ln1_g, ln1_b, ff1_w, ff1_b, ff2_w, ff2_b, ln2_g, ln2_b;
  };

  EncoderParams() = default;

  /// Truncated-normal weights (two standard deviations), unit gains, zero
  /// biases, zero distance heads.
  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoderParams p;
    p.config_ = cfg;
    std::mt19937_64 rng(hash_seed({seed, 0xe1c0ULL}));
    std::normal_distribution<double> normal(0.0, cfg.init_std);
    auto weight = [&](std::size_t rows, std::size_t cols) {
      nn::Tensor<T> t(rows == 0 ? nn::Shape{cols} : nn::Shape{rows, cols});
      for (T& v : t.values()) {
        double x;
        do x = normal(rng);
        while (std::abs(x) > 2.0 * cfg.init_std);
        v = static_cast<T>(x);
      }
      return t;
    };
    auto zeros = [](std::size_t n) { return nn::Tensor<T>({n}); };
    auto ones = [](std::size_t n) { return nn::Tensor<T>({n}, T(1)); };
    const auto H = static_cast<std::size_t>(cfg.hidden);
    const auto I = static_cast<std::size_t>(cfg.intermediate);
    const auto V = static_cast<std::size_t>(cfg.vocab_size);
    const auto S = static_cast<std::size_t>(cfg.max_positions);
    auto& ps = p.params_;
    p.tok_emb_ = ps.add("embeddings.token", weight(V, H));
    p.pos_emb_ = ps.add("embeddings.position", weight(S, H));
    p.seg_emb_ = ps.add("embeddings.segment", weight(2, H));
    p.emb_ln_g_ = ps.add("embeddings.ln.gamma", ones(H));
    p.emb_ln_b_ = ps.add("embeddings.ln.beta", zeros(H));
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      Layer L{};
      L.q_w = ps.add(pre + "attn.query.w", weight(H, H));
      L.q_b = ps.add(pre + "attn.query.b", zeros(H));
      L.k_w = ps.add(pre + "attn.key.w", weight(H, H));
      L.k_b = ps.add(pre + "attn.key.b", zeros(H));
      L.v_w = ps.add(pre + "attn.value.w", weight(H, H));
      L.v_b = ps.add(pre + "attn.value.b", zeros(H));
      L.o_w = ps.add(pre + "attn.output.w", weight(H, H));
      L.o_b = ps.add(pre + "attn.output.b", zeros(H));
      L.ln1_g = ps.add(pre + "attn.ln.gamma", ones(H));
      L.ln1_b = ps.add(pre + "attn.ln.beta", zeros(H));
      L.ff1_w = ps.add(pre + "ffn.in.w", weight(H, I));
      L.ff1_b = ps.add(pre + "ffn.in.b", zeros(I));
      L.ff2_w = ps.add(pre + "ffn.out.w", weight(I, H));
      L.ff2_b = ps.add(pre + "ffn.out.b", zeros(H));
      L.ln2_g = ps.add(pre + "ffn.ln.gamma", ones(H));
      L.ln2_b = ps.add(pre + "ffn.ln.beta", zeros(H));
      p.layers_.push_back(L);
    }
    p.pool_w_ = ps.add("pooler.w", weight(H, H));
    p.pool_b_ = ps.add("pooler.b", zeros(H));
    p.mlm_w_ = ps.add("mlm.dense.w", weight(H, H));
    p.mlm_b_ = ps.add("mlm.dense.b", zeros(H));
    p.mlm_ln_g_ = ps.add("mlm.ln.gamma", ones(H));
    p.mlm_ln_b_ = ps.add("mlm.ln.beta", zeros(H));
    p.mlm_bias_ = ps.add("mlm.output.bias", zeros(V));
    p.pair_w_ = ps.add("pair_classifier.w", weight(H, 2));
    p.pair_b_ = ps.add("pair_classifier.b", zeros(2));
    for (int k = -cfg.K; k <= cfg.K; ++k) {
      if (k == 0) continue;
      nn::Shape shape = cfg.coupling == Coupling::kUni ? nn::Shape{H} : nn::Shape{H, H};
      p.heads_.push_back(ps.add("distance.k" + std::to_string(k), nn::Tensor<T>(shape)));
    }
    return p;
  }

  /// Rebuilds the layout for `cfg` and adopts `values` after checking every
  /// name and shape.
  static EncoderParams from_values(const EncoderConfig& cfg, const nn::ParamSet<T>& values) {
    EncoderParams p = init(cfg, 0);
    if (values.size() != p.params_.size())
      fail("parameter count ", values.size(), " does not match config (expected ", p.params_.size(), ")");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values.name(i) != p.params_.name(i))
        fail("parameter ", i, " is ", values.name(i), ", expected ", p.params_.name(i));
      if (values[i].shape() != p.params_[i].shape())
        fail("parameter ", values.name(i), " has shape ", nn::shape_str(values[i].shape()), ", config implies ",
             nn::shape_str(p.params_[i].shape()));
      p.params_[i] = values[i];
    }
    return p;
  }

  template <class U>
  EncoderParams<U> cast() const {
    return EncoderParams<U>::from_values(config_, params_.template cast<U>());
  }

  const EncoderConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  std::size_t token_embedding() const { return tok_emb_; }
  std::size_t position_embedding() const { return pos_emb_; }
  std::size_t segment_embedding() const { return seg_emb_; }
  std::size_t embedding_ln_gamma() const { return emb_ln_g_; }
  std::size_t embedding_ln_beta() const { return emb_ln_b_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t pooler_w() const { return pool_w_; }
  std::size_t pooler_b() const { return pool_b_; }
  std::size_t mlm_w() const { return mlm_w_; }
  std::size_t mlm_b() const { return mlm_b_; }
  std::size_t mlm_ln_gamma() const { return mlm_ln_g_; }
  std::size_t mlm_ln_beta() const { return mlm_ln_b_; }
  std::size_t mlm_bias() const { return mlm_bias_; }
  std::size_t pair_w() const { return pair_w_; }
  std::size_t pair_b() const { return pair_b_; }
  std::size_t head(int k) const { return heads_.at(head_slot(k, config_.K)); }

 private:
  EncoderConfig config_;
  nn::ParamSet<T> params_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, seg_emb_ = 0, emb_ln_g_ = 0, emb_ln_b_ = 0;
  std::vector<Layer> layers_;
  std::size_t pool_w_ = 0, pool_b_ = 0;
  std::size_t mlm_w_ = 0, mlm_b_ = 0, mlm_ln_g_ = 0, mlm_ln_b_ = 0, mlm_bias_ = 0;
  std::size_t pair_w_ = 0, pair_b_ = 0;
  std::vector<std::size_t> heads_;
};

/// Parameters bound to one tape plus the dropout stream for that pass.
/// Dropout is active only when `train` is set.
template <class T>
class ForwardContext {
 public:
  ForwardContext(nn::Tape<T>& tape, const EncoderParams<T>& params, bool train = false, std::uint64_t seed = 0,
                 bool track_grads = true)
      : tape_(&tape), params_(&params), vars_(params.params().bind(tape, track_grads)), train_(train), seed_(seed) {}

  /// Reuses variables already bound to `tape`, in parameter order.
  ForwardContext(nn::Tape<T>& tape, const EncoderParams<T>& params, std::vector<nn::Var<T>> vars, bool train = false,
                 std::uint64_t seed = 0)
      : tape_(&tape), params_(&params), vars_(std::move(vars)), train_(train), seed_(seed) {
    if (vars_.size() != params.params().size())
      fail("forward context: ", vars_.size(), " bound variables for ", params.params().size(), " parameters");
  }

  nn::Tape<T>& tape() { return *tape_; }
  const EncoderParams<T>& params() const { return *params_; }
  const std::vector<nn::Var<T>>& vars() const { return vars_; }
  nn::Var<T> var(std::size_t index) const { return vars_[index]; }

  nn::Var<T> dropout(nn::Var<T> x) {
    if (!train_) return x;
    return nn::dropout(x, params_->config().dropout, hash_seed({seed_, counter_++}));
  }

 private:
  nn::Tape<T>* tape_;
  const EncoderParams<T>* params_;
  std::vector<nn::Var<T>> vars_;
  bool train_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

template <class T>
struct Encoded {
  nn::Var<T> hidden;  // [n x H] over the non-padding prefix
  nn::Var<T> pooled;  // [1 x H]
};

/// Runs the encoder over the prefix up to the last attended position;
/// trailing padding is never computed, and any padding inside that prefix is
/// excluded through an additive key mask.
template <class T>
Encoded<T> encode(ForwardContext<T>& ctx, const PackedInput& in) {
  using namespace nn;
  const EncoderParams<T>& P = ctx.params();
  const EncoderConfig& cfg = P.config();
  if (in.ids.size() > static_cast<std::size_t>(cfg.max_positions))
    fail("encode: input length ", in.ids.size(), " exceeds max positions ", cfg.max_positions);
  if (in.segments.size() != in.ids.size() || in.attention.size() != in.ids.size())
    fail("encode: ids/segments/attention lengths differ");
  std::size_t n = 0;
  for (std::size_t i = 0; i < in.attention.size(); ++i)
    if (in.attention[i]) n = i + 1;
  if (n == 0) fail("encode: input has no attended positions");
  for (std::size_t i = 0; i < n; ++i)
    if (in.ids[i] < 0 || in.ids[i] >= cfg.vocab_size)
      fail("encode: token id ", in.ids[i], " outside vocabulary of size ", cfg.vocab_size);

  Tape<T>& tape = ctx.tape();
  const std::span<const TokenId> ids(in.ids.data(), n);
  const std::span<const TokenId> segs(in.segments.data(), n);
  std::vector<TokenId> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<TokenId>(i);

  Var<T> x = add(add(embedding_gather(ctx.var(P.token_embedding()), ids),
                     embedding_gather(ctx.var(P.position_embedding()), std::span<const TokenId>(positions))),
                 embedding_gather(ctx.var(P.segment_embedding()), segs));
  x = ctx.dropout(layer_norm(x, ctx.var(P.embedding_ln_gamma()), ctx.var(P.embedding_ln_beta())));

  std::optional<Var<T>> key_mask;
  if (std::count(in.attention.begin(), in.attention.begin() + static_cast<std::ptrdiff_t>(n), std::uint8_t{0}) > 0) {
    Tensor<T> bias({1, n});
    for (std::size_t i = 0; i < n; ++i) bias[i] = in.attention[i] ? T(0) : T(-10000);
    key_mask = tape.constant(std::move(bias));
  }

  const auto H = static_cast<std::size_t>(cfg.hidden);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const std::size_t d = H / heads;
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  for (const auto& L : P.layers()) {
    Var<T> q = add(matmul(x, ctx.var(L.q_w)), ctx.var(L.q_b));
    Var<T> k = add(matmul(x, ctx.var(L.k_w)), ctx.var(L.k_b));
    Var<T> v = add(matmul(x, ctx.var(L.v_w)), ctx.var(L.v_b));
    std::vector<Var<T>> ctx_heads;
    for (std::size_t h = 0; h < heads; ++h) {
      Var<T> qh = slice(q, 1, h * d, (h + 1) * d);
      Var<T> kh = slice(k, 1, h * d, (h + 1) * d);
      Var<T> vh = slice(v, 1, h * d, (h + 1) * d);
      Var<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
      if (key_mask) scores = add(scores, *key_mask);
      Var<T> probs = ctx.dropout(softmax(scores, 1));
      ctx_heads.push_back(matmul(probs, vh));
    }
    Var<T> attn = heads == 1 ? ctx_heads[0] : concat(ctx_heads, 1);
    attn = ctx.dropout(add(matmul(attn, ctx.var(L.o_w)), ctx.var(L.o_b)));
    x = layer_norm(add(x, attn), ctx.var(L.ln1_g), ctx.var(L.ln1_b));
    Var<T> ff = gelu(add(matmul(x, ctx.var(L.ff1_w)), ctx.var(L.ff1_b)));
    ff = ctx.dropout(add(matmul(ff, ctx.var(L.ff2_w)), ctx.var(L.ff2_b)));
    x = layer_norm(add(x, ff), ctx.var(L.ln2_g), ctx.var(L.ln2_b));
  }
  Var<T> first = slice(x, 0, 0, 1);
  Var<T> pooled = nn::tanh(add(matmul(first, ctx.var(P.pooler_w())), ctx.var(P.pooler_b())));
  return {x, pooled};
}

template <class T>
struct Representation {
  std::optional<nn::Var<T>> c;  // absent under uni coupling
  nn::Var<T> t;
  std::optional<Encoded<T>> pair_pass;  // the joint pass, when one ran
};

/// c and t for one candidate from already packed (and possibly masked)
/// inputs: `anchor_alone` is [CLS] anchor [SEP]; `candidate_input` is the pair
/// packing under combined/uni and the single packing under isolated.
template <class T>
Representation<T> represent_packed(ForwardContext<T>& ctx, const PackedInput* anchor_alone,
                                   const PackedInput& candidate_input) {
  const Coupling coupling = ctx.params().config().coupling;
  Representation<T> r;
  if (coupling != Coupling::kUni) {
    if (!anchor_alone) fail("represent: coupling ", coupling_name(coupling), " needs the anchor-alone input");
    r.c = encode(ctx, *anchor_alone).pooled;
  }
  Encoded<T> e = encode(ctx, candidate_input);
  r.t = e.pooled;
  if (coupling != Coupling::kIsolated) r.pair_pass = e;
  return r;
}

/// Unmasked convenience form taking raw token ids.
template <class T>
Representation<T> represent(ForwardContext<T>& ctx, const Sentence& anchor, const Sentence& candidate, int max_seq) {
  const Coupling coupling = ctx.params().config().coupling;
  const PackedInput alone = pack_single(anchor, max_seq);
  const PackedInput cand =
      coupling == Coupling::kIsolated ? pack_single(candidate, max_seq) : pack_pair(anchor, candidate, max_seq);
  return represent_packed(ctx, &alone, cand);
}

/// Log-bilinear logit t^T W_k c, or t^T w_k under uni coupling. Returns a
/// [1 x 1] value.
template <class T>
nn::Var<T> score(ForwardContext<T>& ctx, const std::optional<nn::Var<T>>& c, nn::Var<T> t, int k) {
  using namespace nn;
  const EncoderParams<T>& P = ctx.params();
  if (k == 0) fail("score: k must be non-zero");
  Var<T> head = ctx.var(P.head(k));
  const auto H = static_cast<std::size_t>(P.config().hidden);
  if (P.config().coupling == Coupling::kUni) {
    if (c) fail("score: uni coupling takes no anchor vector");
    return matmul(t, reshape(head, {H, 1}));
  }
  if (!c) fail("score: coupling ", coupling_name(P.config().coupling), " requires the anchor vector c");
  return matmul(matmul(t, head), transpose(*c));
}

/// Masked-token logits [m x V] at `positions` of an encoded sequence; the
/// output projection is the token embedding table.
template <class T>
nn::Var<T> mlm_logits(ForwardContext<T>& ctx, nn::Var<T> hidden, std::span<const TokenId> positions) {
  using namespace nn;
  const EncoderParams<T>& P = ctx.params();
  Var<T> h = embedding_gather(hidden, positions);
  h = gelu(add(matmul(h, ctx.var(P.mlm_w())), ctx.var(P.mlm_b())));
  h = layer_norm(h, ctx.var(P.mlm_ln_gamma()), ctx.var(P.mlm_ln_beta()));
  return add(matmul(h, transpose(ctx.var(P.token_embedding()))), ctx.var(P.mlm_bias()));
}

/// Two-way classifier logits [1 x 2] over a pooled vector.
template <class T>
nn::Var<T> pair_logits(ForwardContext<T>& ctx, nn::Var<T> pooled) {
  const EncoderParams<T>& P = ctx.params();
  return nn::add(nn::matmul(pooled, ctx.var(P.pair_w())), ctx.var(P.pair_b()));
}

/// Pooled vector of one input with frozen parameters (no tape retained).
template <class T>
nn::Tensor<T> pooled_vector(const EncoderParams<T>& params, const PackedInput& in) {
  nn::Tape<T> tape;
  ForwardContext<T> ctx(tape, params, false, 0, false);
  return encode(ctx, in).pooled.value();
}

}  // namespace conpono
