#include "doctest.h"
#include "oracles.hpp"

#include "unisar/toy.hpp"
#include "unisar/training.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace unisar;

namespace {

struct SmallRun {
    Split split;
    ModelConfig mc;
    TrainConfig tc;
    LossWeights lw{1e-3, 1e-1, 0.5, 1e-5};

    SmallRun() {
        SyntheticConfig sc;
        sc.n_users = 40;
        sc.n_items = 150;
        sc.n_words = 60;
        sc.n_categories = 6;
        sc.events_per_user = 14;
        sc.seed = 3;
        SplitOptions so;
        so.max_train_targets_per_user = 4;
        split = split_leave_one_out(generate_synthetic(sc), so);
        mc.d = 8;
        mc.heads = 2;
        mc.max_history_len = 8;
        mc.n_shared = mc.n_search = mc.n_rec = 2;
        mc.expert_hidden = 8;
        tc.batch_size = 32;
        tc.max_epochs = 10;
        tc.patience = 100;
        tc.learning_rate = 5e-3;
        tc.neg_per_pos = 2;
        tc.max_valid_instances = 30;
        tc.seed = 5;
    }

    std::unique_ptr<ModelBundle> bundle(const AblationFlags& flags = {}) const {
        auto b = std::make_unique<ModelBundle>(split.train.vocab, mc, flags);
        b->initialize(tc.seed);
        return b;
    }
};

std::string bytes_of(const ParameterStore& store) {
    std::ostringstream out;
    save_params(store, out);
    return out.str();
}

std::string load_error(ParameterStore& store, const std::string& bytes) {
    std::istringstream in(bytes);
    try {
        load_params(store, in);
    } catch (const std::runtime_error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("click_loss examples") {
    const double half[] = {0.5, 0.5}, labels[] = {1.0, 0.0};
    CHECK(std::abs(click_loss(half, labels) - std::log(2.0)) < 1e-15);
    const double close[] = {1.0 - 1e-12, 1e-12};
    CHECK(click_loss(close, labels) < 1e-11);
    const double hand[] = {0.9, 0.2};
    const double want = -(std::log(0.9) + std::log(0.8)) / 2.0;
    CHECK(std::abs(click_loss(hand, labels) - want) < 1e-15);
    CHECK(want == doctest::Approx(0.1642).epsilon(1e-3));
    CHECK(click_loss(std::span<const double>{}, std::span<const double>{}) == 0.0);

    Tape t(false);
    const double z[] = {std::log(9.0), std::log(0.25)};
    Var logits = t.constant(Matrix(2, 1, std::vector<double>(z, z + 2)));
    CHECK(std::abs(click_loss_from_logits(logits, labels).scalar() - want) < 1e-15);
}

TEST_CASE("total_loss term by term on the toy batch") {
    ToyProblem toy = make_toy_problem();
    const UniSARModel& m = toy.model();
    const LossWeights w = toy.weights;
    LossBreakdown b = total_loss(m, toy.batch, w, false);

    std::vector<double> scores[2], labels[2];
    for (const Group* g : toy.batch.groups) {
        const std::vector<double> z = m.score_group(*g);
        for (std::size_t j = 0; j < z.size(); ++j) {
            scores[static_cast<int>(g->scenario)].push_back(1.0 / (1.0 + std::exp(-z[j])));
            labels[static_cast<int>(g->scenario)].push_back(g->labels[j]);
        }
    }
    const double click_s = click_loss(scores[0], labels[0]);
    const double click_r = click_loss(scores[1], labels[1]);
    CHECK(std::abs(b.click_s - click_s) < 1e-12);
    CHECK(std::abs(b.click_r - click_r) < 1e-12);
    CHECK(b.n_search == scores[0].size());
    CHECK(b.n_rec == scores[1].size());

    Tape t(false);
    const double rel = relevance_loss(t, toy.batch.rel_pairs, m.tables(), m.relevance_head(), false).scalar();
    CHECK(!toy.batch.rel_pairs.empty());
    CHECK(std::abs(b.rel - rel) < 1e-12);

    const std::size_t n = toy.batch.groups.size(), d = m.config().d;
    Matrix pooled[4] = {Matrix(n, d), Matrix(n, d), Matrix(n, d), Matrix(n, d)};
    AlignmentBatch ab;
    for (std::size_t i = 0; i < n; ++i) {
        const Group& g = *toy.batch.groups[i];
        HistoryEncoding enc = m.encode_history(t, g.history.events());
        const Var parts[4] = {enc.h_s2s, enc.h_r2s, enc.h_r2r, enc.h_s2r};
        for (int k = 0; k < 4; ++k)
            for (std::size_t c = 0; c < d; ++c) pooled[k](i, c) = parts[k].value()(0, c);
        ab.owner.push_back(g.user);
        ab.has_search.push_back(enc.has_search);
        ab.has_rec.push_back(enc.has_rec);
    }
    ab.h_s2s = t.constant(pooled[0]);
    ab.h_r2s = t.constant(pooled[1]);
    ab.h_r2r = t.constant(pooled[2]);
    ab.h_s2r = t.constant(pooled[3]);
    const double align = align_loss(ab, m.alignment_head(), false).scalar();
    CHECK(std::abs(b.align - align) < 1e-12);

    double l2 = 0.0;
    for (const auto& p : toy.bundle->store())
        for (double v : p->value.data()) l2 += v * v;
    CHECK(std::abs(b.l2 - l2) < 1e-9 * l2);

    const double g = w.gamma;
    const double want = click_r + g * click_s + (1 + g) * w.alpha * rel + (1 + g) * w.beta * align + w.lambda * l2;
    CHECK(std::abs(b.total - want) < 1e-12);

    const TermWeights tw = term_weights(m, w);
    CHECK(std::abs(tw.click_r * b.click_r + tw.click_s * b.click_s + tw.rel * b.rel + tw.align * b.align +
                   tw.lambda * b.l2 - b.total) < 1e-12);

    LossBreakdown again = total_loss(m, toy.batch, w, true);
    CHECK(again.total == b.total);
}

TEST_CASE("zero weights leave only the rec click loss") {
    ToyProblem toy = make_toy_problem();
    LossBreakdown b = total_loss(toy.model(), toy.batch, {0, 0, 0, 0}, false);
    CHECK(b.total == b.click_r);
    CHECK(b.click_s > 0.0);
}

TEST_CASE("no_align zeroes the alignment term") {
    ToyOptions o;
    o.flags.no_align = true;
    o.weights.beta = 10.0;
    ToyProblem toy = make_toy_problem(o);
    CHECK(term_weights(toy.model(), o.weights).align == 0.0);
    LossBreakdown b = total_loss(toy.model(), toy.batch, o.weights, true);
    CHECK(b.align == 0.0);
    const double g = o.weights.gamma;
    CHECK(std::abs(b.total - (b.click_r + g * b.click_s + (1 + g) * o.weights.alpha * b.rel + o.weights.lambda * b.l2)) <
          1e-12);
    // Only the L2 term reaches the alignment head.
    for (const auto& p : toy.bundle->store()) {
        if (p->name.find(".align.") == std::string::npos) continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) CHECK(p->grad[i] == 2.0 * o.weights.lambda * p->value[i]);
    }
}

TEST_CASE("total_loss gradient") {
    ToyProblem toy = make_toy_problem();
    GradCheckResult r = gradcheck_toy(toy);
    INFO("worst " << r.worst_parameter << "[" << r.worst_index << "] analytic " << r.worst_analytic << " numeric "
                  << r.worst_numeric);
    CHECK(r.entries_checked == toy.bundle->store().total_entries());
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("total_loss gradient against extrapolated differences") {
    // Plain central differences at eps = 1e-5 carry about 4e-11 of rounding
    // noise on this loss; the extrapolated estimate at a wider step does not.
    ToyProblem toy = make_toy_problem();
    GradCheckOptions o;
    o.eps = 1e-3;
    o.extrapolate = true;
    GradCheckResult r = gradcheck_toy(toy, o);
    INFO("worst " << r.worst_parameter << "[" << r.worst_index << "]");
    CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("joint-less training keeps scenario gradients apart") {
    ToyOptions o;
    o.flags.no_joint = true;
    ToyProblem toy = make_toy_problem(o);
    auto& models = toy.bundle->models();
    REQUIRE(models.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        const UniSARModel& m = *models[k];
        const Scenario own = *m.single_task();
        Batch own_batch;
        for (const Group* g : toy.batch.groups)
            if (g->scenario == own) own_batch.groups.push_back(g);
        own_batch.rel_pairs = toy.batch.rel_pairs;
        toy.bundle->store().zero_grad();
        total_loss(m, own_batch, o.weights, true);
        bool own_touched = false;
        for (Parameter* p : m.parameters())
            own_touched = own_touched || max_abs_diff(p->grad, Matrix(p->grad.rows(), p->grad.cols())) > 0.0;
        CHECK(own_touched);
        for (Parameter* p : models[1 - k]->parameters())
            CHECK(max_abs_diff(p->grad, Matrix(p->grad.rows(), p->grad.cols())) == 0.0);
        Tape t(false);
        HistoryEncoding enc = m.encode_history(t, toy.batch.groups[0]->history.events());
        const Scenario other = own == Scenario::rec ? Scenario::search : Scenario::rec;
        CHECK_THROWS_AS(m.logits(t, enc, 0, other, std::vector<WordId>{1}, std::vector<ItemId>{1}), std::logic_error);
    }
}

TEST_CASE("sample_negatives") {
    SyntheticConfig sc;
    sc.n_users = 10;
    sc.events_per_user = 12;
    Dataset d = generate_synthetic(sc);
    Split s = split_leave_one_out(d);
    std::vector<Sample> one{s.train.samples.front()};
    Rng rng(1);
    CHECK(sample_negatives(one, d.vocab, 1, rng).size() == 2);

    Rng a(9), b(9);
    auto first = sample_negatives(s.train.samples, d.vocab, 4, a);
    auto second = sample_negatives(s.train.samples, d.vocab, 4, b);
    REQUIRE(first.size() == 5 * s.train.samples.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i].target_item == second[i].target_item);
    for (std::size_t i = 0; i < first.size(); i += 5) {
        CHECK(first[i].label == 1);
        const auto seen = interacted_items(*first[i].history.owner());
        std::set<ItemId> drawn;
        for (std::size_t j = 1; j < 5; ++j) {
            const Sample& n = first[i + j];
            CHECK(n.label == 0);
            CHECK(n.user == first[i].user);
            CHECK(n.history.size() == first[i].history.size());
            CHECK(n.query == first[i].query);
            CHECK_FALSE(std::binary_search(seen.begin(), seen.end(), n.target_item));
            drawn.insert(n.target_item);
        }
        CHECK(drawn.size() == 4);
    }

    auto h = std::make_shared<UserHistory>();
    h->user = 0;
    h->events = {BehaviorEvent::rec(0, 1, 0), BehaviorEvent::rec(0, 2, 1)};
    Sample full;
    full.user = 0;
    full.target_item = 1;
    full.history = HistoryView(h, 0, 1);
    std::vector<Sample> lone{full};
    CHECK_THROWS(sample_negatives(lone, Vocab{1, 2, 1, 1}, 1, rng));
    CHECK_THROWS_AS(sample_negatives(lone, Vocab{1, 5, 1, 1}, 0, rng), std::invalid_argument);
}

TEST_CASE("one Adam step lowers a quadratic probe") {
    ParameterStore store;
    Parameter& p = store.create("p", 2, 3);
    Rng rng(4);
    p.value = oracle::random_matrix(2, 3, rng, -2, 2);
    const Matrix target = oracle::random_matrix(2, 3, rng, -2, 2);
    auto loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) s += (p.value[i] - target[i]) * (p.value[i] - target[i]);
        return s;
    };
    Adam adam({&p}, 0.05);
    for (int step = 0; step < 5; ++step) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] = 2 * (p.value[i] - target[i]);
        const double before = loss();
        adam.step();
        CHECK(loss() < before);
    }
    CHECK(adam.steps() == 5);
}

TEST_CASE("parameter files round trip bit-exactly") {
    ToyProblem toy = make_toy_problem();
    const std::string first = bytes_of(toy.bundle->store());
    ToyOptions other;
    other.seed = 99;
    ToyProblem fresh = make_toy_problem(other);
    CHECK(bytes_of(fresh.bundle->store()) != first);
    CHECK(load_error(fresh.bundle->store(), first).empty());
    CHECK(bytes_of(fresh.bundle->store()) == first);
    for (const auto& p : toy.bundle->store()) CHECK(fresh.bundle->store().at(p->name).value == p->value);
}

TEST_CASE("parameter file errors") {
    ParameterStore small;
    small.create("a", 2, 2, 1.5);
    const std::string bytes = bytes_of(small);

    ParameterStore more;
    more.create("a", 2, 2);
    more.create("b.extra", 1, 3);
    const std::string missing = load_error(more, bytes);
    CHECK(missing.find("b.extra") != std::string::npos);

    ParameterStore reshaped;
    reshaped.create("a", 3, 2);
    const std::string shape = load_error(reshaped, bytes);
    CHECK(shape.find("a") != std::string::npos);
    CHECK(shape.find("2x2") != std::string::npos);
    CHECK(shape.find("3x2") != std::string::npos);

    ParameterStore none;
    CHECK(load_error(none, bytes).find("unknown parameter a") != std::string::npos);

    std::string versioned = bytes;
    versioned[12] = 7;
    CHECK(load_error(small, versioned).find("version 7") != std::string::npos);
    CHECK(!load_error(small, "garbage").empty());
    CHECK(!load_error(small, bytes.substr(0, bytes.size() - 3)).empty());
}

TEST_CASE("fit stops after patience with a constant metric") {
    SmallRun run;
    run.tc.patience = 1;
    run.tc.learning_rate = 1e-300; // updates vanish below the parameters' ulp
    auto b = run.bundle();
    FitResult r = fit(*b, run.split.train, run.split.valid, run.tc, run.lw);
    REQUIRE(r.models.size() == 1);
    const auto& epochs = r.models[0].epochs;
    REQUIRE(epochs.size() == 2);
    CHECK(r.models[0].best_epoch == 1);
    CHECK(epochs[0].valid_ndcg10_r == epochs[1].valid_ndcg10_r);
    CHECK(epochs[0].valid_ndcg10_s == epochs[1].valid_ndcg10_s);
}

TEST_CASE("fit is deterministic and reduces the loss") {
    SmallRun run;
    auto a = run.bundle();
    auto b = run.bundle();
    FitResult ra = fit(*a, run.split.train, run.split.valid, run.tc, run.lw);
    FitResult rb = fit(*b, run.split.train, run.split.valid, run.tc, run.lw);
    CHECK(bytes_of(a->store()) == bytes_of(b->store()));
    const auto& epochs = ra.models[0].epochs;
    REQUIRE(epochs.size() == 10);
    CHECK(epochs[9].total < epochs[0].total);
    for (std::size_t e = 0; e < epochs.size(); ++e) CHECK(epochs[e].total == rb.models[0].epochs[e].total);

    std::ostringstream log;
    ra.write_log(log, AblationFlags{});
    std::istringstream lines(log.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "# ablation=none");
    std::getline(lines, line);
    CHECK(line == "epoch,L_Click_R,L_Click_S,L_Rel,L_Align,L2,total,valid_NDCG10_R,valid_NDCG10_S");
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 10);
}

TEST_CASE("fit under no_joint trains two models") {
    SmallRun run;
    run.tc.max_epochs = 2;
    AblationFlags flags;
    flags.no_joint = true;
    auto b = run.bundle(flags);
    FitResult r = fit(*b, run.split.train, run.split.valid, run.tc, run.lw);
    REQUIRE(r.models.size() == 2);
    CHECK(r.models[0].epochs[0].valid_ndcg10_r.has_value());
    CHECK_FALSE(r.models[0].epochs[0].valid_ndcg10_s.has_value());
    CHECK(r.models[1].epochs[0].valid_ndcg10_s.has_value());
    CHECK(r.models[0].epochs[0].train.click_s == 0.0);
}

TEST_CASE("config validation") {
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    LossWeights lw;
    lw.alpha = -1;
    CHECK_THROWS_AS(lw.validate(), std::invalid_argument);
}
