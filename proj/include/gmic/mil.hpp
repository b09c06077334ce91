#pragma once

#include <string>
#include <utility>

#include "gmic/trunk.hpp"

namespace gmic {

// Patch path: encoder f_t (residual trunk + GAP + linear embedding), gated
// attention over the K patch embeddings, and the sigmoid prediction head.
struct MilConfig {
  TrunkConfig trunk{
      .stage_widths = {16, 32, 64, 128},
      .blocks_per_stage = 2,
      .in_channels = 1,
      .stem_kernel = 6,
      .stem_stride = 2,
      .stem_pool = true,
  };
  int embedding_dim = 128;  // L
  int attention_dim = 128;  // D_a
  bool attention_bias = false;
  int num_classes = 2;
};

template <typename T>
void init_mil_params(ParamStoreT<T>& ps, const MilConfig& cfg, Rng& rng) {
  init_trunk_params(ps, cfg.trunk, "mil.ft", rng);
  detail::init_linear(ps, "mil.embed.w", cfg.embedding_dim, cfg.trunk.stage_widths.back(), rng);
  ps.create("mil.embed.b", {i64(cfg.embedding_dim)});
  detail::init_linear(ps, "mil.attn.V", cfg.attention_dim, cfg.embedding_dim, rng);
  detail::init_linear(ps, "mil.attn.U", cfg.attention_dim, cfg.embedding_dim, rng);
  detail::init_linear(ps, "mil.attn.w", 1, cfg.attention_dim, rng);
  if (cfg.attention_bias) {
    ps.create("mil.attn.V_bias", {i64(cfg.attention_dim)});
    ps.create("mil.attn.U_bias", {i64(cfg.attention_dim)});
  }
  detail::init_linear(ps, "mil.head.w", cfg.num_classes, cfg.embedding_dim, rng);
}

// patches: [B,1,h_c,w_c] -> embeddings [B, L]
template <typename T>
VarT<T> encode_patches(Binder<T>& bind, VarT<T> patches, const MilConfig& cfg, bool train) {
  VarT<T> f = trunk_forward(bind, patches, cfg.trunk, "mil.ft", train);
  VarT<T> pooled = ops::global_avg_pool(f);
  return ops::linear(pooled, bind("mil.embed.w"), bind("mil.embed.b"));
}

// Gated attention over a bag: alpha_k = softmax_k(w . (tanh(V h_k) * sigm(U h_k))),
// z = sum_k alpha_k h_k. Returns (alpha [K,1], z [1,L]).
template <typename T>
std::pair<VarT<T>, VarT<T>> gated_attention(Binder<T>& bind, VarT<T> embeddings,
                                            const MilConfig& cfg) {
  // note: recording ops may reallocate tape nodes, so dims are copied out
  const std::vector<i64> shape = embeddings.value().shape;
  if (shape.size() != 2 || shape[1] != cfg.embedding_dim)
    throw ShapeError("gated_attention: expected [K,L] embeddings");
  if (shape[0] < 1) throw ShapeError("gated_attention: empty bag");
  VarT<T> t = cfg.attention_bias
                  ? ops::linear(embeddings, bind("mil.attn.V"), bind("mil.attn.V_bias"))
                  : ops::linear(embeddings, bind("mil.attn.V"));
  VarT<T> u = cfg.attention_bias
                  ? ops::linear(embeddings, bind("mil.attn.U"), bind("mil.attn.U_bias"))
                  : ops::linear(embeddings, bind("mil.attn.U"));
  VarT<T> gate = ops::mul(ops::tanh_op(t), ops::sigmoid(u));
  VarT<T> scores = ops::linear(gate, bind("mil.attn.w"));  // [K,1]
  VarT<T> alpha = ops::softmax_flat(scores);
  VarT<T> z = ops::matmul(ops::reshape(alpha, {i64(1), shape[0]}), embeddings);
  return {alpha, z};
}

// Ablation: fixed uniform attention (alpha_k = 1/K).
template <typename T>
std::pair<VarT<T>, VarT<T>> uniform_attention(VarT<T> embeddings) {
  const std::vector<i64> shape = embeddings.value().shape;
  if (shape.size() != 2 || shape[0] < 1) throw ShapeError("uniform_attention: expected [K,L]");
  i64 k = shape[0];
  VarT<T> alpha =
      embeddings.tape->constant(TensorT<T>::full({k, 1}, T(1) / T(k)));
  VarT<T> z = ops::matmul(ops::reshape(alpha, {i64(1), k}), embeddings);
  return {alpha, z};
}

// z: [1,L] -> per-class probabilities [1,C]; no bias term.
template <typename T>
VarT<T> mil_predict(Binder<T>& bind, VarT<T> z) {
  return ops::sigmoid(ops::linear(z, bind("mil.head.w")));
}

}  // namespace gmic
