#include "doctest.h"
#include "oracles.hpp"

#include "unisar/embedding.hpp"
#include "unisar/gradcheck.hpp"

#include <cmath>

using namespace unisar;

namespace {

struct Fixture {
    ParameterStore store;
    EmbeddingTables tables;
    PositionalEmbeddings pos;
    SimilarityHead head;

    explicit Fixture(std::size_t d = 2, Vocab vocab = {3, 6, 5, 1}) {
        tables = EmbeddingTables::create(store, "emb", vocab, d);
        pos = PositionalEmbeddings::create(store, "pos", 4, d);
        head = SimilarityHead::create(store, "sim", d, 0.5);
    }

    void randomize(std::uint64_t seed) {
        Rng rng(seed);
        for (Parameter* p : {tables.users, tables.items, tables.words, pos.mixed, head.w})
            p->value = oracle::random_matrix(p->value.rows(), p->value.cols(), rng);
    }
};

Matrix value_of(const std::function<Var(Tape&)>& f) {
    Tape t(false);
    return f(t).value();
}

} // namespace

TEST_CASE("embed_query") {
    Fixture f;
    f.tables.words->value = Matrix{{1, 0}, {0, 1}, {2, 2}, {0, 0}, {4, -4}};
    std::vector<WordId> one{2}, two{0, 1}, dup{0, 0, 1};
    CHECK(value_of([&](Tape& t) { return embed_query(t, f.tables, one); }) == Matrix{{2, 2}});
    CHECK(value_of([&](Tape& t) { return embed_query(t, f.tables, two); }) == Matrix{{0.5, 0.5}});
    Matrix d = value_of([&](Tape& t) { return embed_query(t, f.tables, dup); });
    CHECK(std::abs(d(0, 0) - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(d(0, 1) - 1.0 / 3.0) < 1e-15);
    Tape t;
    CHECK_THROWS_AS(embed_query(t, f.tables, std::vector<WordId>{}), std::invalid_argument);
}

TEST_CASE("embed_behavior") {
    Fixture f;
    f.randomize(1);
    auto row = [&](Parameter* p, std::size_t r) { return oracle::row_of(p->value, r); };
    BehaviorEvent rec = BehaviorEvent::rec(0, 1, 5);
    CHECK(value_of([&](Tape& t) { return embed_behavior(t, f.tables, rec); }) == row(f.tables.items, 5));

    BehaviorEvent empty = BehaviorEvent::search(0, 1, {3}, {});
    CHECK(value_of([&](Tape& t) { return embed_behavior(t, f.tables, empty); }) == row(f.tables.words, 3));

    BehaviorEvent one = BehaviorEvent::search(0, 1, {3}, {2});
    Matrix want = oracle::plus(row(f.tables.words, 3), row(f.tables.items, 2));
    CHECK(max_abs_diff(value_of([&](Tape& t) { return embed_behavior(t, f.tables, one); }), want) < 1e-15);

    BehaviorEvent two = BehaviorEvent::search(0, 1, {3, 4}, {1, 2});
    Matrix got = value_of([&](Tape& t) { return embed_behavior(t, f.tables, two); });
    for (std::size_t j = 0; j < 2; ++j) {
        const double w = 0.5 * (f.tables.words->value(3, j) + f.tables.words->value(4, j));
        const double c = 0.5 * (f.tables.items->value(1, j) + f.tables.items->value(2, j));
        CHECK(std::abs(got(0, j) - (w + c)) < 1e-15);
    }
    Tape t;
    CHECK_THROWS(embed_behavior(t, f.tables, BehaviorEvent::rec(0, 1, 99)));
}

TEST_CASE("embed_behavior is linear in the tables") {
    Fixture f;
    f.randomize(2);
    BehaviorEvent ev = BehaviorEvent::search(0, 1, {0, 4}, {1, 3, 5});
    Matrix a = value_of([&](Tape& t) { return embed_behavior(t, f.tables, ev); });
    for (Parameter* p : {f.tables.items, f.tables.words}) p->value *= 2.0;
    Matrix b = value_of([&](Tape& t) { return embed_behavior(t, f.tables, ev); });
    for (std::size_t j = 0; j < a.cols(); ++j) CHECK(b(0, j) == 2.0 * a(0, j));
}

TEST_CASE("embed_history") {
    Fixture f;
    f.randomize(3);
    std::vector<BehaviorEvent> h{BehaviorEvent::rec(0, 1, 1), BehaviorEvent::search(0, 2, {2}, {4}),
                                 BehaviorEvent::rec(0, 3, 0)};
    Matrix got = value_of([&](Tape& t) { return embed_history(t, f.tables, h, *f.pos.mixed); });
    for (std::size_t r = 0; r < 3; ++r) {
        Matrix e = value_of([&](Tape& t) { return embed_behavior(t, f.tables, h[r]); });
        CHECK(max_abs_diff(oracle::row_of(got, r), oracle::plus(e, oracle::row_of(f.pos.mixed->value, r))) < 1e-15);
    }

    f.pos.mixed->value.fill(0.0);
    Matrix plain = value_of([&](Tape& t) { return embed_history(t, f.tables, h, *f.pos.mixed); });
    CHECK(plain == value_of([&](Tape& t) { return embed_events(t, f.tables, h); }));

    Matrix empty = value_of([&](Tape& t) { return embed_history(t, f.tables, {}, *f.pos.mixed); });
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 2);

    std::vector<BehaviorEvent> too_long(5, BehaviorEvent::rec(0, 1, 1));
    Tape t;
    CHECK_THROWS_AS(embed_history(t, f.tables, too_long, *f.pos.mixed), std::length_error);
}

TEST_CASE("embed_history permutation acts through the behavior term only") {
    Fixture f;
    f.randomize(4);
    std::vector<BehaviorEvent> h{BehaviorEvent::rec(0, 1, 1), BehaviorEvent::rec(0, 2, 3)};
    std::vector<BehaviorEvent> swapped{h[1], h[0]};
    Matrix a = value_of([&](Tape& t) { return embed_history(t, f.tables, h, *f.pos.mixed); });
    Matrix b = value_of([&](Tape& t) { return embed_history(t, f.tables, swapped, *f.pos.mixed); });
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(b(0, j) - f.pos.mixed->value(0, j) - (a(1, j) - f.pos.mixed->value(1, j))) < 1e-15);
    }
}

TEST_CASE("similarity examples") {
    Fixture f(3);
    f.head.w->value = Matrix::identity(3);
    Matrix e{{0, 1, 0}};
    CHECK(std::abs(similarity(e, e, f.head) - 0.7615941559557649) < 1e-12);
    f.head.w->value.fill(0.0);
    CHECK(similarity(Matrix{{1, 2, 3}}, Matrix{{-1, 4, 0}}, f.head) == 0.0);
    f.head.w->value = Matrix{{0, 1, 0}, {0, 0, 0}, {0, 0, 0}};
    Matrix a{{1, 0, 0}}, b{{0, 1, 0}};
    CHECK(similarity(a, b, f.head) != similarity(b, a, f.head));
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        f.head.w->value = oracle::random_matrix(3, 3, rng, -3, 3);
        const double s = similarity(oracle::random_matrix(1, 3, rng), oracle::random_matrix(1, 3, rng), f.head);
        CHECK(s > -1.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("temperature is clamped") {
    Fixture f;
    CHECK(f.head.tau() == doctest::Approx(0.5).epsilon(1e-15));
    f.head.log_tau->value[0] = std::log(100.0);
    f.head.clamp_temperature();
    CHECK(f.head.tau() == doctest::Approx(5.0).epsilon(1e-12));
    f.head.log_tau->value[0] = std::log(1e-4);
    f.head.clamp_temperature();
    CHECK(f.head.tau() == doctest::Approx(0.05).epsilon(1e-12));
}

namespace {

double contrastive(double pos, const std::vector<double>& negs, double tau, bool literal) {
    Tape t(false);
    Matrix n(1, negs.size(), negs);
    Var inv = t.constant(Matrix{{1.0 / tau}});
    return contrastive_rows(t.constant(Matrix{{pos}}), t.constant(n), inv, literal).scalar();
}

// Tables where every similarity is chosen exactly: W = I, d = 2 and each
// relevant row is a multiple of e1 so that a W b^T = atanh(target).
struct HandSet : Fixture {
    HandSet(double pos, double neg_item, double neg_query) : Fixture(2, {1, 3, 3, 1}) {
        head.w->value = Matrix::identity(2);
        tables.words->value = Matrix{{1, 0}, {std::atanh(neg_query) / std::atanh(pos), 0}, {0, 0}};
        tables.items->value = Matrix{{std::atanh(pos), 0}, {std::atanh(neg_item), 0}, {std::atanh(neg_item), 0}};
    }
};

} // namespace

TEST_CASE("contrastive rows examples") {
    CHECK(std::abs(contrastive(0.3, {0.3}, 0.7, false) - std::log(2.0)) < 1e-15);
    CHECK(std::abs(contrastive(0.5, {0.1, 0.1}, 0.5, false) - oracle::info_nce(0.5, {0.1, 0.1}, 0.5)) < 1e-14);
    CHECK(std::abs(contrastive(0.5, {0.1, 0.1}, 0.5, true) - oracle::info_nce(0.5, {0.1, 0.1}, 0.5, true)) < 1e-14);
    CHECK(contrastive(1.0, {-1.0}, 0.05, false) < 1e-15);
    CHECK(contrastive(0.2, {0.1}, 0.5, false) > contrastive(0.3, {0.1}, 0.5, false));
    CHECK(contrastive(0.2, {0.9, 0.1}, 0.5, false) >= 0.0);
}

TEST_CASE("relevance_loss examples") {
    // One positive, one negative of each kind, everything equal: ln 2 per direction.
    {
        HandSet h(0.4, 0.4, 0.4);
        Tape t(false);
        std::vector<RelevancePair> pairs{{{0}, {0}, {1}, {{1}}}};
        const double v = relevance_loss(t, pairs, h.tables, h.head, false).scalar();
        CHECK(std::abs(v - 2.0 * std::log(2.0)) < 1e-14);
    }
    // Positive 0.5, two negatives at 0.1 on both sides, τ = 0.5.
    {
        HandSet h(0.5, 0.1, 0.1);
        Tape t(false);
        std::vector<RelevancePair> pairs{{{0}, {0}, {1, 2}, {{1}, {1}}}};
        const double v = relevance_loss(t, pairs, h.tables, h.head, false).scalar();
        const double one_side = oracle::info_nce(0.5, {0.1, 0.1}, 0.5);
        CHECK(std::abs(v - 2.0 * one_side) < 1e-13);
        CHECK(std::abs(one_side - 0.6411472830) < 1e-9);
    }
    // Separated similarities with a small temperature drive the loss to zero.
    {
        HandSet h(0.999, -0.999, -0.999);
        h.head.log_tau->value[0] = std::log(0.05);
        Tape t(false);
        std::vector<RelevancePair> pairs{{{0}, {0}, {1}, {{1}}}};
        CHECK(relevance_loss(t, pairs, h.tables, h.head, false).scalar() < 1e-15);
    }
}

TEST_CASE("relevance_loss reduction: sum over clicks, mean over pairs") {
    Fixture f(3, {2, 8, 6, 1});
    f.randomize(6);
    RelevancePair a{{0, 1}, {2, 3}, {4, 5}, {{2}, {3, 4}}};
    RelevancePair b{{5}, {6}, {7, 1}, {{0}}};
    auto loss = [&](std::vector<RelevancePair> ps) {
        Tape t(false);
        return relevance_loss(t, ps, f.tables, f.head, false).scalar();
    };
    const double la = loss({a}), lb = loss({b});
    CHECK(std::abs(loss({a, b}) - 0.5 * (la + lb)) < 1e-14);

    RelevancePair a0{{0, 1}, {2}, {4, 5}, {{2}, {3, 4}}};
    RelevancePair a1{{0, 1}, {3}, {4, 5}, {{2}, {3, 4}}};
    CHECK(std::abs(la - (loss({a0}) + loss({a1}))) < 1e-13);

    // Shared-negative form agrees with the per-pair form.
    std::vector<std::pair<std::vector<WordId>, std::vector<ItemId>>> shared{{a.query, a.clicked}};
    Tape t(false);
    const double s = relevance_loss(t, shared, a.negative_items, a.negative_queries, f.tables, f.head, false).scalar();
    CHECK(s == la);
}

TEST_CASE("relevance_loss errors") {
    Fixture f;
    Tape t;
    std::vector<RelevancePair> none;
    CHECK_THROWS_AS(relevance_loss(t, none, f.tables, f.head, false), std::invalid_argument);
    std::vector<RelevancePair> no_neg{{{0}, {0}, {}, {{1}}}};
    CHECK_THROWS_AS(relevance_loss(t, no_neg, f.tables, f.head, false), std::invalid_argument);
    std::vector<RelevancePair> no_click{{{0}, {}, {1}, {{1}}}};
    CHECK_THROWS_AS(relevance_loss(t, no_click, f.tables, f.head, false), std::invalid_argument);
}

TEST_CASE("relevance_loss passes grad_check") {
    for (bool literal : {false, true}) {
        Fixture f(4, {2, 8, 6, 1});
        f.randomize(7);
        std::vector<RelevancePair> pairs{{{0, 1}, {2, 3}, {4, 5, 6}, {{2}, {3, 4}}}, {{5}, {6}, {7, 1}, {{0}, {1}}}};
        auto loss = [&](Tape& t) { return relevance_loss(t, pairs, f.tables, f.head, literal); };
        GradCheckResult r = grad_check(std::function<Var(Tape&)>(loss), f.store);
        CAPTURE(r.worst_parameter);
        CHECK(r.max_relative_error < 1e-4);
    }
}
