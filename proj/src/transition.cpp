#include "unisar/transition.hpp"

namespace unisar {

namespace {

std::vector<EncoderBlockWeights> make_blocks(ParameterStore& store, const std::string& prefix, std::size_t d,
                                             std::size_t ffn_hidden, std::size_t blocks) {
    std::vector<EncoderBlockWeights> out;
    for (std::size_t b = 0; b < blocks; ++b) {
        out.push_back(EncoderBlockWeights::create(store, prefix + "." + std::to_string(b), d, ffn_hidden));
    }
    return out;
}

Var scalar_zero(Tape& t) { return t.constant(Matrix(1, 1)); }

} // namespace

TransitionEncoders TransitionEncoders::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                              std::size_t ffn_hidden, std::size_t blocks) {
    if (blocks == 0) throw std::invalid_argument("encoders need at least one block");
    return {make_blocks(store, prefix + ".enc_s", d, ffn_hidden, blocks),
            make_blocks(store, prefix + ".enc_r", d, ffn_hidden, blocks),
            make_blocks(store, prefix + ".enc_m", d, ffn_hidden, blocks)};
}

FusionWeights FusionWeights::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                    std::size_t ffn_hidden) {
    return {AttentionWeights::create(store, prefix + ".self", d),
            NormWeights::create(store, prefix + ".self_norm", d),
            AttentionWeights::create(store, prefix + ".cross", d),
            NormWeights::create(store, prefix + ".cross_norm", d),
            FeedForwardWeights::create(store, prefix + ".ffn", d, ffn_hidden),
            NormWeights::create(store, prefix + ".ffn_norm", d)};
}

FusionBlocks FusionBlocks::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                  std::size_t ffn_hidden) {
    return {FusionWeights::create(store, prefix + ".fuse_s", d, ffn_hidden),
            FusionWeights::create(store, prefix + ".fuse_r", d, ffn_hidden)};
}

Var encode_sequence(const TransitionOptions& opts, std::span<const EncoderBlockWeights> blocks, Var x,
                    const Matrix* allowed) {
    if (x.rows() == 0) return x;
    for (const auto& block : blocks) x = encoder_block(opts.attention, block, x, allowed, opts.plain_blocks);
    return x;
}

SameScenarioReps extract_same_scenario(const TransitionOptions& opts, const TransitionEncoders& enc, Var e_s,
                                       Var e_r) {
    return {encode_sequence(opts, enc.search, e_s, nullptr), encode_sequence(opts, enc.rec, e_r, nullptr)};
}

CrossScenarioReps extract_cross_scenario(const TransitionOptions& opts, const TransitionEncoders& enc, Var e_u,
                                         const Matrix& mask, std::span<const Scenario> b) {
    const std::size_t n = e_u.rows();
    if (b.size() != n) throw ShapeError("scenario vector length does not match history length");
    if (mask.rows() != n || mask.cols() != n) {
        throw ShapeError("mask " + mask.shape_string() + " does not match history of length " + std::to_string(n));
    }
    std::vector<std::int32_t> search_rows, rec_rows;
    for (std::size_t t = 0; t < n; ++t) {
        (b[t] == Scenario::search ? search_rows : rec_rows).push_back(static_cast<std::int32_t>(t));
    }
    Var h_m = encode_sequence(opts, enc.mixed, e_u, &mask);
    return {h_m, select_rows(h_m, search_rows), select_rows(h_m, rec_rows)};
}

Var fuse(const TransitionOptions& opts, const FusionWeights& w, Var h_same, Var h_cross) {
    if (h_cross.rows() == 0) return h_cross;
    if (h_same.rows() == 0) return feed_forward(w.ffn, w.ffn_norm, h_cross, opts.plain_blocks);
    Var f = attention_sublayer(opts.attention, w.self_attn, w.self_norm, h_same, h_same, nullptr, opts.plain_blocks);
    Var c = attention_sublayer(opts.attention, w.cross_attn, w.cross_norm, h_cross, f, nullptr, opts.plain_blocks);
    return feed_forward(w.ffn, w.ffn_norm, c, opts.plain_blocks);
}

Var alignment_side(Var a, Var b, std::span<const std::int64_t> owner, const std::vector<bool>& valid,
                   const SimilarityHead& head, bool literal_denominator) {
    Tape& t = *a.tape;
    std::vector<std::int32_t> rows;
    for (std::size_t i = 0; i < valid.size(); ++i)
        if (valid[i]) rows.push_back(static_cast<std::int32_t>(i));
    if (rows.size() < 2) return scalar_zero(t);

    const std::size_t n = rows.size();
    Matrix negatives(n, n);
    std::size_t with_negatives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && owner[rows[i]] != owner[rows[j]]) {
                negatives(i, j) = 1.0;
                any = true;
            }
        }
        with_negatives += any ? 1 : 0;
    }
    if (with_negatives == 0) return scalar_zero(t);

    Var av = select_rows(a, rows);
    Var bv = select_rows(b, rows);
    Var inv_tau = exp(scale(t.param(*head.log_tau), -1.0));
    Var eye = t.constant(Matrix::identity(n));
    Var ab = similarity_matrix(av, bv, head); // sim(a_i, b_j)
    Var ba = similarity_matrix(bv, av, head); // sim(b_i, a_j)
    Var pos_ab = sum_rows(hadamard(ab, eye));
    Var pos_ba = sum_rows(hadamard(ba, eye));
    Var total = add(contrastive_rows(pos_ab, ab, inv_tau, literal_denominator, &negatives),
                    contrastive_rows(pos_ba, ba, inv_tau, literal_denominator, &negatives));
    return scale(total, 1.0 / static_cast<double>(with_negatives));
}

Var align_loss(const AlignmentBatch& batch, const SimilarityHead& head, bool literal_denominator,
               AlignmentTerms terms) {
    const std::size_t n = batch.owner.size();
    if (n < 2) throw std::invalid_argument("alignment loss needs a batch of at least two histories");
    if (batch.has_search.size() != n || batch.has_rec.size() != n) {
        throw std::invalid_argument("alignment batch flags do not match its size");
    }
    Tape& t = *batch.h_s2s.tape;
    Var loss = scalar_zero(t);
    if (terms.search) {
        loss = add(loss, alignment_side(batch.h_s2s, batch.h_r2s, batch.owner, batch.has_search, head,
                                        literal_denominator));
    }
    if (terms.rec) {
        loss = add(loss, alignment_side(batch.h_r2r, batch.h_s2r, batch.owner, batch.has_rec, head,
                                        literal_denominator));
    }
    return loss;
}

} // namespace unisar
