#include "unisar/embedding.hpp"

#include <cmath>
#include <numeric>

namespace unisar {

EmbeddingTables EmbeddingTables::create(ParameterStore& store, const std::string& prefix, const Vocab& vocab,
                                        std::size_t d) {
    auto rows = [](std::int32_t n) { return static_cast<std::size_t>(std::max(n, 1)); };
    return {&store.create(prefix + ".user", rows(vocab.n_users), d),
            &store.create(prefix + ".item", rows(vocab.n_items), d),
            &store.create(prefix + ".word", rows(vocab.n_words), d)};
}

PositionalEmbeddings PositionalEmbeddings::create(ParameterStore& store, const std::string& prefix,
                                                  std::size_t max_len, std::size_t d) {
    return {&store.create(prefix + ".mixed", max_len, d), &store.create(prefix + ".search", max_len, d),
            &store.create(prefix + ".rec", max_len, d)};
}

SimilarityHead SimilarityHead::create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                      double initial_tau) {
    SimilarityHead h{&store.create(prefix + ".w", d, d), &store.create(prefix + ".log_tau", 1, 1)};
    h.log_tau->value[0] = std::log(initial_tau);
    return h;
}

double SimilarityHead::tau() const { return std::exp(log_tau->value[0]); }

void SimilarityHead::clamp_temperature() const {
    double& v = log_tau->value[0];
    v = std::clamp(v, std::log(kMinTau), std::log(kMaxTau));
}

Var embed_query(Tape& tape, const EmbeddingTables& tables, std::span<const WordId> words) {
    if (words.empty()) throw std::invalid_argument("query has no words");
    return mean_rows(tape.gather(*tables.words, words));
}

Var embed_behavior(Tape& tape, const EmbeddingTables& tables, const BehaviorEvent& event) {
    std::span<const BehaviorEvent> one(&event, 1);
    return embed_events(tape, tables, one);
}

Var embed_events(Tape& tape, const EmbeddingTables& tables, std::span<const BehaviorEvent> events) {
    const std::size_t d = tables.dim();
    const std::size_t n = events.size();
    if (n == 0) return tape.constant(Matrix(0, d));

    // E = P_item * gather(items) + P_word * gather(words), where the pooling
    // matrices hold the 1 / 1/|C_q| / 1/|q| weights of each event's rows.
    std::vector<std::int32_t> item_ids, word_ids;
    for (const auto& e : events) {
        if (e.scenario == Scenario::rec) {
            item_ids.push_back(e.item);
        } else {
            if (e.query.empty()) throw std::invalid_argument("search event without query words");
            item_ids.insert(item_ids.end(), e.clicked.begin(), e.clicked.end());
            word_ids.insert(word_ids.end(), e.query.begin(), e.query.end());
        }
    }
    Matrix pool_items(n, item_ids.size());
    Matrix pool_words(n, word_ids.size());
    std::size_t ki = 0, kw = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const auto& e = events[t];
        if (e.scenario == Scenario::rec) {
            pool_items(t, ki++) = 1.0;
            continue;
        }
        for (std::size_t c = 0; c < e.clicked.size(); ++c) pool_items(t, ki++) = 1.0 / static_cast<double>(e.clicked.size());
        for (std::size_t w = 0; w < e.query.size(); ++w) pool_words(t, kw++) = 1.0 / static_cast<double>(e.query.size());
    }

    Var out;
    if (!item_ids.empty()) out = matmul(tape.constant(std::move(pool_items)), tape.gather(*tables.items, item_ids));
    if (!word_ids.empty()) {
        Var words = matmul(tape.constant(std::move(pool_words)), tape.gather(*tables.words, word_ids));
        out = out.valid() ? add(out, words) : words;
    }
    return out;
}

Var positional_rows(Tape& tape, Parameter& table, std::size_t n) {
    if (n > table.value.rows()) {
        throw std::length_error("history of length " + std::to_string(n) + " exceeds positional table " +
                                table.name + " with " + std::to_string(table.value.rows()) + " rows");
    }
    if (n == 0) return tape.constant(Matrix(0, table.value.cols()));
    std::vector<std::int32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return tape.gather(table, idx);
}

Var embed_history(Tape& tape, const EmbeddingTables& tables, std::span<const BehaviorEvent> events,
                  Parameter& positional) {
    Var pos = positional_rows(tape, positional, events.size());
    if (events.empty()) return pos;
    return add(embed_events(tape, tables, events), pos);
}

Var similarity_matrix(Var a, Var b, const SimilarityHead& head) {
    Tape& t = *a.tape;
    return tanh(matmul_nt(matmul(a, t.param(*head.w)), b));
}

Var similarity(Var a, Var b, const SimilarityHead& head) {
    if (a.rows() != 1 || b.rows() != 1) throw ShapeError("similarity expects two row vectors");
    return similarity_matrix(a, b, head);
}

double similarity(const Matrix& a, const Matrix& b, const SimilarityHead& head) {
    Tape t(false);
    return similarity(t.constant(a), t.constant(b), head).scalar();
}

Var contrastive_rows(Var positive, Var negatives, Var inv_tau, bool literal_denominator,
                     const Matrix* negative_mask) {
    const std::size_t n = positive.rows();
    const std::size_t k = negatives.cols();
    Matrix mask = negative_mask ? *negative_mask : Matrix(n, k, 1.0);
    if (mask.rows() != n || mask.cols() != k) throw ShapeError("negative mask shape");

    std::vector<double> row_has_negative(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (mask(i, j) != 0.0) row_has_negative[i] = 1.0;

    Var pos_logits = scale_by(positive, inv_tau);
    Var neg_logits = scale_by(negatives, inv_tau);
    Var lse;
    if (literal_denominator) {
        lse = masked_logsumexp_rows(neg_logits, mask);
    } else {
        Matrix full(n, k + 1);
        for (std::size_t i = 0; i < n; ++i) {
            full(i, 0) = 1.0;
            for (std::size_t j = 0; j < k; ++j) full(i, j + 1) = mask(i, j);
        }
        std::vector<Var> parts{pos_logits, neg_logits};
        lse = masked_logsumexp_rows(concat_cols(parts), full);
    }
    Matrix keep(n, 1, std::vector<double>(row_has_negative));
    return dot_const(sub(lse, pos_logits), keep);
}

Var relevance_loss(Tape& tape, std::span<const RelevancePair> pairs, const EmbeddingTables& tables,
                   const SimilarityHead& head, bool literal_denominator) {
    if (pairs.empty()) throw std::invalid_argument("relevance loss needs at least one pair");
    Var inv_tau = exp(scale(tape.param(*head.log_tau), -1.0));
    std::vector<Var> per_pair;
    for (const auto& pair : pairs) {
        if (pair.clicked.empty()) throw std::invalid_argument("relevance pair without clicked items");
        if (pair.negative_items.empty() || pair.negative_queries.empty()) {
            throw std::invalid_argument("relevance loss needs negative items and negative queries");
        }
        Var e_q = embed_query(tape, tables, pair.query);
        Var pos_items = tape.gather(*tables.items, pair.clicked);
        Var neg_items = tape.gather(*tables.items, pair.negative_items);
        std::vector<Var> neg_q_rows;
        for (const auto& q : pair.negative_queries) neg_q_rows.push_back(embed_query(tape, tables, q));
        Var neg_queries = concat_rows(neg_q_rows);

        const std::size_t c = pair.clicked.size();
        Var pos = transpose(similarity_matrix(e_q, pos_items, head));                 // c x 1
        Var item_side = repeat_row(similarity_matrix(e_q, neg_items, head), c);       // c x n_i
        Var query_side = transpose(similarity_matrix(neg_queries, pos_items, head)); // c x n_q
        per_pair.push_back(add(contrastive_rows(pos, item_side, inv_tau, literal_denominator),
                               contrastive_rows(pos, query_side, inv_tau, literal_denominator)));
    }
    Var total = per_pair.size() == 1 ? per_pair[0] : sum_all(concat_rows(per_pair));
    return scale(total, 1.0 / static_cast<double>(pairs.size()));
}

Var relevance_loss(Tape& tape, std::span<const std::pair<std::vector<WordId>, std::vector<ItemId>>> pairs,
                   std::span<const ItemId> negative_items, std::span<const std::vector<WordId>> negative_queries,
                   const EmbeddingTables& tables, const SimilarityHead& head, bool literal_denominator) {
    std::vector<RelevancePair> expanded;
    for (const auto& [query, clicked] : pairs) {
        expanded.push_back({query, clicked, std::vector<ItemId>(negative_items.begin(), negative_items.end()),
                            std::vector<std::vector<WordId>>(negative_queries.begin(), negative_queries.end())});
    }
    return relevance_loss(tape, expanded, tables, head, literal_denominator);
}

} // namespace unisar
