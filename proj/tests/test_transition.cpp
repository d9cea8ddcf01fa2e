#include "doctest.h"
#include "oracles.hpp"

#include "unisar/gradcheck.hpp"
#include "unisar/transition.hpp"

#include <cmath>

using namespace unisar;

namespace {

constexpr std::size_t kDim = 4;
constexpr std::size_t kHeads = 2;

struct Fixture {
    ParameterStore store;
    TransitionEncoders enc;
    FusionBlocks fusion;
    SimilarityHead head;
    TransitionOptions opts;

    explicit Fixture(std::uint64_t seed, bool plain = false) {
        enc = TransitionEncoders::create(store, "t", kDim, 6, 1);
        fusion = FusionBlocks::create(store, "t", kDim, 6);
        head = SimilarityHead::create(store, "align", kDim, 0.5);
        opts.attention = {kDim, kHeads, MaskMode::additive};
        opts.plain_blocks = plain;
        Rng rng(seed);
        for (auto& p : store) {
            if (p->name == "align.log_tau") continue;
            p->value = oracle::random_matrix(p->value.rows(), p->value.cols(), rng, -0.8, 0.8);
        }
    }
};

Matrix eval(const std::function<Var(Tape&)>& f) {
    Tape t(false);
    return f(t).value();
}

Matrix random_input(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return oracle::random_matrix(n, kDim, rng);
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(rows[i], j);
    return out;
}

} // namespace

TEST_CASE("same-scenario extraction matches a brute-force block") {
    Fixture f(3);
    for (std::size_t n : {1u, 3u}) {
        Matrix es = random_input(n, 10 + n);
        Matrix er = random_input(n + 1, 20 + n);
        Tape t(false);
        SameScenarioReps r = extract_same_scenario(f.opts, f.enc, t.constant(es), t.constant(er));
        CHECK(max_abs_diff(r.h_s2s.value(), oracle::encoder_block(es, f.enc.search[0], kHeads, nullptr, false)) <
              1e-12);
        CHECK(max_abs_diff(r.h_r2r.value(), oracle::encoder_block(er, f.enc.rec[0], kHeads, nullptr, false)) <
              1e-12);
    }
}

TEST_CASE("single row self-attention is the value path") {
    Fixture f(4, true);
    Matrix x = random_input(1, 5);
    Matrix got = eval([&](Tape& t) { return extract_same_scenario(f.opts, f.enc, t.constant(x), t.constant(x)).h_s2s; });
    const auto& a = f.enc.search[0].attn;
    Matrix through = oracle::mul(oracle::mul(x, a.wv->value), a.wo->value);
    CHECK(max_abs_diff(got, oracle::mlp(through, f.enc.search[0].ffn)) < 1e-12);
}

TEST_CASE("empty sequences stay empty") {
    Fixture f(5);
    Tape t(false);
    SameScenarioReps r = extract_same_scenario(f.opts, f.enc, t.constant(Matrix(0, kDim)), t.constant(random_input(2, 1)));
    CHECK(r.h_s2s.rows() == 0);
    CHECK(r.h_r2r.rows() == 2);
}

TEST_CASE("cross-scenario extraction") {
    Fixture f(6);
    const std::vector<Scenario> b{Scenario::rec, Scenario::search, Scenario::search, Scenario::rec, Scenario::rec};
    Matrix x = random_input(b.size(), 7);
    Matrix mask = build_cross_mask(b);
    Tape t(false);
    CrossScenarioReps r = extract_cross_scenario(f.opts, f.enc, t.constant(x), mask, b);
    Matrix want = oracle::encoder_block(x, f.enc.mixed[0], kHeads, &mask, false);
    CHECK(max_abs_diff(r.h_m.value(), want) < 1e-12);
    CHECK(r.h_r2s.value() == rows_of(r.h_m.value(), {1, 2}));
    CHECK(r.h_s2r.value() == rows_of(r.h_m.value(), {0, 3, 4}));
    CHECK(r.h_r2s.rows() + r.h_s2r.rows() == r.h_m.rows());

    CHECK_THROWS_AS(extract_cross_scenario(f.opts, f.enc, t.constant(x), Matrix(4, 4, 1.0), b), ShapeError);
}

TEST_CASE("homogeneous history gives zero attention context") {
    Fixture f(7);
    const std::vector<Scenario> b(3, Scenario::rec);
    Matrix x = random_input(3, 8);
    Matrix mask = build_cross_mask(b);
    for (const Matrix& w : attention_weights(f.opts.attention, f.enc.mixed[0].attn, x, &mask))
        CHECK(max_abs_diff(w, Matrix(3, 3)) == 0.0);
    Tape t(false);
    CrossScenarioReps r = extract_cross_scenario(f.opts, f.enc, t.constant(x), mask, b);
    const auto& blk = f.enc.mixed[0];
    Matrix y = oracle::layer_norm(x, blk.attn_norm.gain->value, blk.attn_norm.bias->value);
    CHECK(max_abs_diff(r.h_s2r.value(), oracle::ffn_sublayer(y, blk.ffn, blk.ffn_norm, false)) < 1e-12);
    CHECK(r.h_r2s.rows() == 0);
}

TEST_CASE("a lone search position attends to the rec position") {
    Fixture f(8);
    const std::vector<Scenario> b{Scenario::search, Scenario::rec};
    Matrix mask = build_cross_mask(b);
    for (const Matrix& w : attention_weights(f.opts.attention, f.enc.mixed[0].attn, random_input(2, 9), &mask)) {
        CHECK(w(0, 1) == 1.0);
        CHECK(w(0, 0) == 0.0);
    }
}

TEST_CASE("mask exclusivity on random mixed histories") {
    Fixture f(9);
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + static_cast<std::size_t>(trial % 5);
        std::vector<Scenario> b(n);
        for (auto& s : b) s = uniform(rng, 0.0, 1.0) < 0.5 ? Scenario::search : Scenario::rec;
        Matrix x = oracle::random_matrix(n, kDim, rng, -3.0, 3.0);
        Matrix mask = build_cross_mask(b);
        for (const Matrix& w : attention_weights(f.opts.attention, f.enc.mixed[0].attn, x, &mask)) {
            for (std::size_t i = 0; i < n; ++i) {
                double same = 0.0, total = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    total += w(i, j);
                    if (b[i] == b[j]) same += w(i, j);
                }
                CHECK(same <= 1e-6 * std::max(total, 1.0));
            }
        }
    }
}

TEST_CASE("swapping two rec events swaps their cross rows") {
    Fixture f(10);
    const std::vector<Scenario> b{Scenario::rec, Scenario::search, Scenario::rec, Scenario::search, Scenario::rec};
    Matrix x = random_input(b.size(), 12);
    Matrix swapped = rows_of(x, {0, 1, 4, 3, 2});
    Matrix mask = build_cross_mask(b);
    Tape t(false);
    Matrix a = extract_cross_scenario(f.opts, f.enc, t.constant(x), mask, b).h_s2r.value();
    Matrix c = extract_cross_scenario(f.opts, f.enc, t.constant(swapped), mask, b).h_s2r.value();
    CHECK(max_abs_diff(rows_of(a, {0, 2, 1}), c) < 1e-12);
}

TEST_CASE("fuse matches the composed oracle") {
    for (bool plain : {false, true}) {
        Fixture f(11, plain);
        const auto& w = f.fusion.search;
        for (std::size_t n : {1u, 3u}) {
            Matrix same = random_input(n, 30 + n);
            Matrix cross = random_input(n, 40 + n);
            Matrix got = eval([&](Tape& t) { return fuse(f.opts, w, t.constant(same), t.constant(cross)); });
            Matrix fs = oracle::attention_sublayer(same, same, w.self_attn, w.self_norm, kHeads, nullptr, plain);
            Matrix c = oracle::attention_sublayer(cross, fs, w.cross_attn, w.cross_norm, kHeads, nullptr, plain);
            CHECK(max_abs_diff(got, oracle::ffn_sublayer(c, w.ffn, w.ffn_norm, plain)) < 1e-12);
        }
    }
}

TEST_CASE("fuse degenerate inputs") {
    Fixture f(12);
    const auto& w = f.fusion.rec;
    Matrix cross = random_input(2, 1);
    Matrix empty_cross = eval([&](Tape& t) { return fuse(f.opts, w, t.constant(random_input(2, 2)), t.constant(Matrix(0, kDim))); });
    CHECK(empty_cross.rows() == 0);
    Matrix ffn_only = eval([&](Tape& t) { return fuse(f.opts, w, t.constant(Matrix(0, kDim)), t.constant(cross)); });
    CHECK(max_abs_diff(ffn_only, oracle::ffn_sublayer(cross, w.ffn, w.ffn_norm, false)) < 1e-12);
}

TEST_CASE("identity attention in plain mode mixes rows of H_same convexly") {
    Fixture f(13, true);
    auto& w = f.fusion.search;
    for (Parameter* p : {w.self_attn.wq, w.self_attn.wk, w.self_attn.wv, w.self_attn.wo, w.cross_attn.wq,
                         w.cross_attn.wk, w.cross_attn.wv, w.cross_attn.wo})
        p->value = Matrix::identity(kDim);
    Rng rng(14);
    Matrix same = oracle::random_matrix(3, kDim, rng, -2.0, 2.0);
    Matrix cross = oracle::random_matrix(3, kDim, rng);
    Matrix fs = oracle::attention(same, same, w.self_attn, kHeads, nullptr);
    Matrix c = oracle::attention(cross, fs, w.cross_attn, kHeads, nullptr);
    // Each head mixes its own column slice, so the bound holds per coordinate.
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < kDim; ++j) {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t k = 0; k < 3; ++k) {
                lo = std::min(lo, same(k, j));
                hi = std::max(hi, same(k, j));
            }
            CHECK(c(i, j) >= lo - 1e-12);
            CHECK(c(i, j) <= hi + 1e-12);
        }
    }
    Matrix got = eval([&](Tape& t) { return fuse(f.opts, w, t.constant(same), t.constant(cross)); });
    CHECK(max_abs_diff(got, oracle::mlp(c, w.ffn)) < 1e-12);
}

namespace {

AlignmentBatch batch_of(Tape& t, const Matrix& s2s, const Matrix& r2s, const Matrix& r2r, const Matrix& s2r,
                        std::vector<std::int64_t> owner) {
    AlignmentBatch b;
    b.h_s2s = t.constant(s2s);
    b.h_r2s = t.constant(r2s);
    b.h_r2r = t.constant(r2r);
    b.h_s2r = t.constant(s2r);
    b.has_search.assign(owner.size(), true);
    b.has_rec.assign(owner.size(), true);
    b.owner = std::move(owner);
    return b;
}

} // namespace

TEST_CASE("align_loss of identical vectors is 4 ln 2") {
    Fixture f(14);
    Matrix v(2, kDim);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < kDim; ++j) v(i, j) = 0.3 * static_cast<double>(j) - 0.2;
    Tape t(false);
    CHECK(std::abs(align_loss(batch_of(t, v, v, v, v, {0, 1}), f.head, false).scalar() - 4.0 * std::log(2.0)) <
          1e-12);
    AlignmentTerms only_search{true, false};
    CHECK(std::abs(align_loss(batch_of(t, v, v, v, v, {0, 1}), f.head, false, only_search).scalar() -
                   2.0 * std::log(2.0)) < 1e-12);
}

TEST_CASE("align_loss vanishes for separated pairs at small temperature") {
    Fixture f(15);
    f.head.w->value = Matrix::identity(kDim);
    f.head.log_tau->value(0, 0) = std::log(SimilarityHead::kMinTau);
    Matrix v(2, kDim);
    v(0, 0) = 6.0;
    v(1, 0) = -6.0;
    Tape t(false);
    const double loss = align_loss(batch_of(t, v, v, v, v, {0, 1}), f.head, false).scalar();
    CHECK(loss < 1e-12);
    CHECK(loss >= 0.0);
}

TEST_CASE("align_loss batch of three against a scalar oracle") {
    Fixture f(16);
    Rng rng(17);
    Matrix s2s = oracle::random_matrix(3, kDim, rng), r2s = oracle::random_matrix(3, kDim, rng);
    Matrix r2r = oracle::random_matrix(3, kDim, rng), s2r = oracle::random_matrix(3, kDim, rng);
    const Matrix& w = f.head.w->value;
    const double tau = f.head.tau();

    // Rows 0 and 1 share an owner; row 2 has no rec history.
    const std::vector<std::int64_t> owner{5, 5, 9};
    auto side = [&](const Matrix& a, const Matrix& b, const std::vector<std::size_t>& rows, bool literal) {
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t i : rows) {
            std::vector<double> ab, ba;
            for (std::size_t j : rows) {
                if (j == i || owner[i] == owner[j]) continue;
                ab.push_back(oracle::bilinear_tanh(oracle::row_of(a, i), w, oracle::row_of(b, j)));
                ba.push_back(oracle::bilinear_tanh(oracle::row_of(b, i), w, oracle::row_of(a, j)));
            }
            if (ab.empty()) continue;
            ++counted;
            total += oracle::info_nce(oracle::bilinear_tanh(oracle::row_of(a, i), w, oracle::row_of(b, i)), ab, tau,
                                      literal);
            total += oracle::info_nce(oracle::bilinear_tanh(oracle::row_of(b, i), w, oracle::row_of(a, i)), ba, tau,
                                      literal);
        }
        return counted == 0 ? 0.0 : total / static_cast<double>(counted);
    };
    for (bool literal : {false, true}) {
        Tape t(false);
        AlignmentBatch b = batch_of(t, s2s, r2s, r2r, s2r, owner);
        b.has_rec[2] = false;
        const double want = side(s2s, r2s, {0, 1, 2}, literal) + side(r2r, s2r, {0, 1}, literal);
        CHECK(std::abs(align_loss(b, f.head, literal).scalar() - want) < 1e-12);
        // The rec side has no usable negatives here.
        CHECK(std::abs(align_loss(b, f.head, literal, {false, true}).scalar()) == 0.0);
    }
}

TEST_CASE("align_loss needs two rows") {
    Fixture f(18);
    Matrix v = random_input(1, 3);
    Tape t(false);
    CHECK_THROWS_AS(align_loss(batch_of(t, v, v, v, v, {0}), f.head, false), std::invalid_argument);
}

TEST_CASE("align_loss gradient") {
    for (bool literal : {false, true}) {
        ParameterStore store;
        SimilarityHead head = SimilarityHead::create(store, "align", kDim, 0.7);
        Rng rng(19);
        head.w->value = oracle::random_matrix(kDim, kDim, rng);
        std::vector<Parameter*> h;
        for (const char* name : {"s2s", "r2s", "r2r", "s2r"}) {
            Parameter& p = store.create(name, 4, kDim);
            p.value = oracle::random_matrix(4, kDim, rng);
            h.push_back(&p);
        }
        auto build = [&](Tape& t) {
            AlignmentBatch b;
            b.h_s2s = t.param(*h[0]);
            b.h_r2s = t.param(*h[1]);
            b.h_r2r = t.param(*h[2]);
            b.h_s2r = t.param(*h[3]);
            b.owner = {0, 1, 1, 2};
            b.has_search = {true, true, true, false};
            b.has_rec = {true, false, true, true};
            return align_loss(b, head, literal);
        };
        GradCheckResult r = grad_check(build, store);
        CHECK(r.max_relative_error < 1e-4);
        CHECK(r.entries_checked == store.total_entries());
    }
}
