#pragma once

// Transition extraction, alignment and fusion.
//
//   H_s2s = enc_s(Ê_s)         H_r2r = enc_r(Ê_r)
//   H_m   = enc_m(Ê_u, M)      H_r2s = H_m[search rows]   H_s2r = H_m[rec rows]
//   F_s   = MSA(H_s2s)         V_s   = FFN(MCA(H_r2s, F_s, F_s))   (same for r)

#include "unisar/attention.hpp"
#include "unisar/datamodel.hpp"
#include "unisar/embedding.hpp"

#include <span>
#include <vector>

namespace unisar {

struct TransitionEncoders {
    std::vector<EncoderBlockWeights> search; // enc_s
    std::vector<EncoderBlockWeights> rec;    // enc_r
    std::vector<EncoderBlockWeights> mixed;  // enc_m

    static TransitionEncoders create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                     std::size_t ffn_hidden, std::size_t blocks);
};

struct FusionWeights {
    AttentionWeights self_attn;
    NormWeights self_norm;
    AttentionWeights cross_attn;
    NormWeights cross_norm;
    FeedForwardWeights ffn;
    NormWeights ffn_norm;

    static FusionWeights create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                std::size_t ffn_hidden);
};

struct FusionBlocks {
    FusionWeights search;
    FusionWeights rec;

    static FusionBlocks create(ParameterStore& store, const std::string& prefix, std::size_t d,
                               std::size_t ffn_hidden);
};

struct TransitionOptions {
    AttentionConfig attention;
    bool plain_blocks = false;
};

/// Runs the blocks in order; an empty sequence passes through unchanged.
Var encode_sequence(const TransitionOptions& opts, std::span<const EncoderBlockWeights> blocks, Var x,
                    const Matrix* allowed);

struct SameScenarioReps {
    Var h_s2s;
    Var h_r2r;
};

struct CrossScenarioReps {
    Var h_m;
    Var h_r2s; // rows of H_m at search positions, in S_s order
    Var h_s2r; // rows of H_m at rec positions, in S_r order
};

SameScenarioReps extract_same_scenario(const TransitionOptions& opts, const TransitionEncoders& enc, Var e_s,
                                       Var e_r);

/// `mask` is normally build_cross_mask(b); an all-ones mask disables it.
CrossScenarioReps extract_cross_scenario(const TransitionOptions& opts, const TransitionEncoders& enc, Var e_u,
                                         const Matrix& mask, std::span<const Scenario> b);

/// V = FFN(MCA(query = H_cross, kv = MSA(H_same))). An empty H_cross yields an
/// empty V; an empty H_same with a nonempty H_cross skips both attentions.
Var fuse(const TransitionOptions& opts, const FusionWeights& w, Var h_same, Var h_cross);

/// Pooled transition vectors of a batch, one row per history (B x d each).
struct AlignmentBatch {
    Var h_s2s, h_r2s, h_r2r, h_s2r;
    std::vector<std::int64_t> owner; // rows with the same owner never act as each other's negatives
    std::vector<bool> has_search;
    std::vector<bool> has_rec;
};

struct AlignmentTerms {
    bool search = true; // L^S: (h_s2s, h_r2s)
    bool rec = true;    // L^R: (h_r2r, h_s2r)
};

/// One side of the alignment loss: InfoNCE of (a_i, b_i) against in-batch
/// b_j (and symmetrically a_j), averaged over the rows that have negatives.
Var alignment_side(Var a, Var b, std::span<const std::int64_t> owner, const std::vector<bool>& valid,
                   const SimilarityHead& head, bool literal_denominator);

/// L_Align = L^S + L^R. Throws std::invalid_argument for fewer than two rows.
Var align_loss(const AlignmentBatch& batch, const SimilarityHead& head, bool literal_denominator,
               AlignmentTerms terms = {});

} // namespace unisar
