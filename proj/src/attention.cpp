#include "unisar/attention.hpp"

#include <cmath>

namespace unisar {

void AttentionConfig::validate() const {
    if (model_dim == 0 || heads == 0) throw std::invalid_argument("attention needs positive model_dim and heads");
    if (model_dim % heads != 0) {
        throw std::invalid_argument("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                                    std::to_string(heads));
    }
}

AttentionWeights AttentionWeights::create(ParameterStore& store, const std::string& prefix, std::size_t d) {
    return {&store.create(prefix + ".wq", d, d), &store.create(prefix + ".wk", d, d),
            &store.create(prefix + ".wv", d, d), &store.create(prefix + ".wo", d, d)};
}

FeedForwardWeights FeedForwardWeights::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                              std::size_t hidden) {
    return {&store.create(prefix + ".w1", d, hidden), &store.create(prefix + ".b1", 1, hidden),
            &store.create(prefix + ".w2", hidden, d), &store.create(prefix + ".b2", 1, d)};
}

NormWeights NormWeights::create(ParameterStore& store, const std::string& prefix, std::size_t d) {
    return {&store.create(prefix + ".gain", 1, d, 1.0), &store.create(prefix + ".bias", 1, d)};
}

EncoderBlockWeights EncoderBlockWeights::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                                std::size_t ffn_hidden) {
    EncoderBlockWeights w;
    w.attn = AttentionWeights::create(store, prefix + ".attn", d);
    w.attn_norm = NormWeights::create(store, prefix + ".attn_norm", d);
    w.ffn = FeedForwardWeights::create(store, prefix + ".ffn", d, ffn_hidden);
    w.ffn_norm = NormWeights::create(store, prefix + ".ffn_norm", d);
    return w;
}

void xavier_uniform(Matrix& m, Rng& rng) {
    const double half = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& v : m.data()) v = uniform(rng, -half, half);
}

namespace {

struct HeadOutputs {
    Var output;
    std::vector<Var> weights;
};

HeadOutputs attention_impl(const AttentionConfig& cfg, const AttentionWeights& w, Var query_seq, Var kv_seq,
                           const Matrix* allowed) {
    cfg.validate();
    Tape& t = *query_seq.tape;
    const std::size_t d = cfg.model_dim;
    if (query_seq.cols() != d || kv_seq.cols() != d) {
        throw ShapeError("attention inputs must have " + std::to_string(d) + " columns, got " +
                         query_seq.value().shape_string() + " and " + kv_seq.value().shape_string());
    }
    const std::size_t nq = query_seq.rows(), nk = kv_seq.rows();
    if (nk == 0) throw ShapeError("attention over an empty key/value sequence");
    if (allowed && (allowed->rows() != nq || allowed->cols() != nk)) {
        throw ShapeError("mask " + allowed->shape_string() + " does not match " + std::to_string(nq) + "x" +
                         std::to_string(nk) + " attention");
    }

    Var q = matmul(query_seq, t.param(*w.wq));
    Var k = matmul(kv_seq, t.param(*w.wk));
    Var v = matmul(kv_seq, t.param(*w.wv));
    const std::size_t hd = cfg.head_dim();
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));

    HeadOutputs out;
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Var qh = slice_cols(q, h * hd, (h + 1) * hd);
        Var kh = slice_cols(k, h * hd, (h + 1) * hd);
        Var vh = slice_cols(v, h * hd, (h + 1) * hd);
        Var logits = scale(matmul_nt(qh, kh), scale_factor);
        Var weights = allowed ? masked_softmax_rows(logits, *allowed, cfg.mask_mode) : softmax_rows(logits);
        out.weights.push_back(weights);
        heads.push_back(matmul(weights, vh));
    }
    Var merged = cfg.heads == 1 ? heads[0] : concat_cols(heads);
    out.output = matmul(merged, t.param(*w.wo));
    return out;
}

} // namespace

Var multihead_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var query_seq, Var kv_seq,
                        const Matrix* allowed) {
    return attention_impl(cfg, w, query_seq, kv_seq, allowed).output;
}

Var masked_multihead_self_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var x,
                                    const Matrix& allowed) {
    return multihead_attention(cfg, w, x, x, &allowed);
}

Var multihead_cross_attention(const AttentionConfig& cfg, const AttentionWeights& w, Var query_seq, Var kv_seq) {
    return multihead_attention(cfg, w, query_seq, kv_seq, nullptr);
}

Var feed_forward_mlp(const FeedForwardWeights& w, Var x) {
    Tape& t = *x.tape;
    Var hidden = gelu(add_row(matmul(x, t.param(*w.w1)), t.param(*w.b1)));
    return add_row(matmul(hidden, t.param(*w.w2)), t.param(*w.b2));
}

Var feed_forward(const FeedForwardWeights& w, const NormWeights& norm, Var x, bool plain) {
    Var y = feed_forward_mlp(w, x);
    if (plain) return y;
    Tape& t = *x.tape;
    return layer_norm_rows(add(x, y), t.param(*norm.gain), t.param(*norm.bias));
}

Var attention_sublayer(const AttentionConfig& cfg, const AttentionWeights& w, const NormWeights& norm, Var query_seq,
                       Var kv_seq, const Matrix* allowed, bool plain) {
    Var a = multihead_attention(cfg, w, query_seq, kv_seq, allowed);
    if (plain) return a;
    Tape& t = *query_seq.tape;
    return layer_norm_rows(add(query_seq, a), t.param(*norm.gain), t.param(*norm.bias));
}

Var encoder_block(const AttentionConfig& cfg, const EncoderBlockWeights& w, Var x, const Matrix* allowed, bool plain) {
    Var y = attention_sublayer(cfg, w.attn, w.attn_norm, x, x, allowed, plain);
    return feed_forward(w.ffn, w.ffn_norm, y, plain);
}

Matrix masked_multihead_self_attention(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& x,
                                       const Matrix& allowed) {
    Tape t(false);
    Var xv = t.constant(x);
    return masked_multihead_self_attention(cfg, w, xv, allowed).value();
}

Matrix multihead_cross_attention(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& query_seq,
                                 const Matrix& kv_seq) {
    Tape t(false);
    return multihead_cross_attention(cfg, w, t.constant(query_seq), t.constant(kv_seq)).value();
}

Matrix feed_forward(const FeedForwardWeights& w, const NormWeights& norm, const Matrix& x, bool plain) {
    Tape t(false);
    return feed_forward(w, norm, t.constant(x), plain).value();
}

std::vector<Matrix> attention_weights(const AttentionConfig& cfg, const AttentionWeights& w, const Matrix& x,
                                      const Matrix* allowed) {
    Tape t(false);
    Var xv = t.constant(x);
    auto out = attention_impl(cfg, w, xv, xv, allowed);
    std::vector<Matrix> result;
    for (Var v : out.weights) result.push_back(v.value());
    return result;
}

} // namespace unisar
