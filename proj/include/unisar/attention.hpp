#pragma once

// Transformer building blocks on top of the tape: multi-head self/cross
// attention with optional 0/1 masks, the position-wise feed-forward layer and
// the encoder block wrapper.
//
// Block structure (unless `plain` is set):
//   y = LayerNorm(x + Attention(x, ...))
//   z = LayerNorm(y + FFN(y))
// With `plain` the residual connections and normalization are dropped and the
// block reduces to FFN(Attention(x)).

#include "unisar/autograd.hpp"
#include "unisar/rng.hpp"

#include <string>

namespace unisar {

struct AttentionConfig {
    std::size_t model_dim = 64;
    std::size_t heads = 2;
    MaskMode mask_mode = MaskMode::additive;

    std::size_t head_dim() const { return model_dim / heads; }
    void validate() const;
};

struct AttentionWeights {
    Parameter* wq = nullptr;
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
    Parameter* wo = nullptr;

    static AttentionWeights create(ParameterStore& store, const std::string& prefix, std::size_t d);
};

struct FeedForwardWeights {
    Parameter* w1 = nullptr;
    Parameter* b1 = nullptr;
    Parameter* w2 = nullptr;
    Parameter* b2 = nullptr;

    static FeedForwardWeights create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                     std::size_t hidden);
};

struct NormWeights {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;

    static NormWeights create(ParameterStore& store, const std::string& prefix, std::size_t d);
};

struct EncoderBlockWeights {
    AttentionWeights attn;
    NormWeights attn_norm;
    FeedForwardWeights ffn;
    NormWeights ffn_norm;

    static EncoderBlockWeights create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                      std::size_t ffn_hidden);
};

/// Zero-mean uniform fill with half-width sqrt(6 / (rows + cols)).
void xavier_uniform(Matrix& m, Rng& rng);

/// Core multi-head attention. `allowed` (Nq x Nk, 0/1) may be null for
/// unrestricted attention. Queries come from `query_seq`, keys and values
/// from `kv_seq`. Throws ShapeError on an empty key/value sequence.
Var multihead_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var query_seq, Var kv_seq,
                        const Matrix* allowed);

Var masked_multihead_self_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var x,
                                    const Matrix& allowed);
Var multihead_cross_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var query_seq, Var kv_seq);

/// Position-wise two-layer MLP: GELU(x W1 + b1) W2 + b2.
Var feed_forward_mlp(const FeedForwardWeights& w, Var x);
/// FFN sublayer with residual + LayerNorm unless `plain`.
Var feed_forward(const FeedForwardWeights& w, const NormWeights& norm, Var x, bool plain);
/// Attention sublayer: LayerNorm(q + attn) unless `plain`.
Var attention_sublayer(const AttentionConfig& cfg, const AttentionWeights& w, const NormWeights& norm, Var query_seq,
                       Var kv_seq, const Matrix* allowed, bool plain);
Var encoder_block(const AttentionConfig& cfg, const EncoderBlockWeights& w, Var x, const Matrix* allowed, bool plain);

// Matrix-in / Matrix-out conveniences evaluated on a non-recording tape.
Matrix masked_multihead_self_attention(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& x,
                                       const Matrix& allowed);
Matrix multihead_cross_attention(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& query_seq,
                                 const Matrix& kv_seq);
Matrix feed_forward(const FeedForwardWeights& w, const NormWeights& norm, const Matrix& x, bool plain);

/// Per-head attention weights (heads x Nq x Nk, flattened per head) for inspection.
std::vector<Matrix> attention_weights(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& x,
                                      const Matrix* allowed);

} // namespace unisar
