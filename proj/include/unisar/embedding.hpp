#pragma once

#include "unisar/autograd.hpp"
#include "unisar/datamodel.hpp"

#include <span>
#include <string>
#include <vector>

namespace unisar {

struct EmbeddingTables {
    Parameter* users = nullptr; // |U| x d
    Parameter* items = nullptr; // |I| x d
    Parameter* words = nullptr; // |W| x d

    static EmbeddingTables create(ParameterStore& store, const std::string& prefix, const Vocab& vocab, std::size_t d);
    std::size_t dim() const { return items->value.cols(); }
};

/// Learned absolute position tables for S_u, S_s and S_r.
struct PositionalEmbeddings {
    Parameter* mixed = nullptr;
    Parameter* search = nullptr;
    Parameter* rec = nullptr;

    static PositionalEmbeddings create(ParameterStore& store, const std::string& prefix, std::size_t max_len,
                                       std::size_t d);
};

/// Bilinear similarity sim(a, b) = tanh(a W b^T) with a learnable temperature.
/// The temperature is stored as log(tau) and kept inside [kMinTau, kMaxTau].
struct SimilarityHead {
    static constexpr double kMinTau = 0.05;
    static constexpr double kMaxTau = 5.0;

    Parameter* w = nullptr;
    Parameter* log_tau = nullptr;

    static SimilarityHead create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                 double initial_tau = 0.5);
    double tau() const;
    void clamp_temperature() const;
};

Var embed_query(Tape& tape, const EmbeddingTables& tables, std::span<const WordId> words);
/// rec: e_i. search: e_q + Mean(clicked items), the mean being zero for no clicks.
Var embed_behavior(Tape& tape, const EmbeddingTables& tables, const BehaviorEvent& event);
/// One behavior embedding per event (N x d), no positional term.
Var embed_events(Tape& tape, const EmbeddingTables& tables, std::span<const BehaviorEvent> events);
/// The first n rows of a positional table; throws std::length_error past its end.
Var positional_rows(Tape& tape, Parameter& table, std::size_t n);
/// embed_events(events) + positional[0:N].
Var embed_history(Tape& tape, const EmbeddingTables& tables, std::span<const BehaviorEvent> events,
                  Parameter& positional);

/// n x m matrix of tanh(a_i W b_j^T).
Var similarity_matrix(Var a, Var b, const SimilarityHead& head);
Var similarity(Var a, Var b, const SimilarityHead& head);
double similarity(const Matrix& a, const Matrix& b, const SimilarityHead& head);

/// Sum over rows of −log(exp(pos/τ) / Σ exp(·/τ)). `positive` is n x 1 and
/// `negatives` n x k (similarities, not yet divided by τ); `negative_mask`
/// (n x k, optional) restricts which negatives count. With
/// `literal_denominator` the positive term is left out of the denominator.
/// Rows without any negative contribute nothing.
Var contrastive_rows(Var positive, Var negatives, Var inv_tau, bool literal_denominator,
                     const Matrix* negative_mask = nullptr);

struct RelevancePair {
    std::vector<WordId> query;
    std::vector<ItemId> clicked;
    std::vector<ItemId> negative_items;
    std::vector<std::vector<WordId>> negative_queries;
};

/// Query–item contrastive loss, both directions, summed over the clicked items
/// of a pair and averaged over pairs.
Var relevance_loss(Tape& tape, std::span<const RelevancePair> pairs, const EmbeddingTables& tables,
                   const SimilarityHead& head, bool literal_denominator);

/// Shared-negatives convenience form.
Var relevance_loss(Tape& tape, std::span<const std::pair<std::vector<WordId>, std::vector<ItemId>>> pairs,
                   std::span<const ItemId> negative_items, std::span<const std::vector<WordId>> negative_queries,
                   const EmbeddingTables& tables, const SimilarityHead& head, bool literal_denominator);

} // namespace unisar
