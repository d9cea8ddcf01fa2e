#include "unisar/toy.hpp"

#include <algorithm>

namespace unisar {

namespace {

constexpr std::int32_t kToyItems = 16;
constexpr std::int32_t kToyWords = 12;

std::vector<std::int32_t> draw_distinct(Rng& rng, std::int32_t n, std::size_t count) {
    std::vector<std::int32_t> out;
    while (out.size() < count) {
        const auto v = static_cast<std::int32_t>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

} // namespace

ToyProblem make_toy_problem(const ToyOptions& o) {
    if (o.batch < 2 || o.history_len < 2) throw std::invalid_argument("toy problem needs batch >= 2 and history >= 2");
    Rng rng = substream(o.seed, "data");
    ToyProblem toy;
    toy.weights = o.weights;
    const auto n_users = static_cast<std::int32_t>(o.batch);

    for (std::int32_t u = 0; u < n_users; ++u) {
        UserHistory h;
        h.user = u;
        for (std::size_t t = 0; t <= o.history_len; ++t) {
            const bool is_target = t == o.history_len;
            // Positions 0 and 1 force both scenarios into every history.
            bool search = t == 0 ? true : t == 1 ? false : uniform01(rng) < 0.5;
            if (is_target) search = u % 2 == 0;
            const auto time = static_cast<Timestamp>(10 * t + 1);
            if (search) {
                std::size_t clicks = is_target ? 1 : uniform_index(rng, 3);
                if (t == 2 && u == 0) clicks = 0; // one search without clicks
                const auto query = draw_distinct(rng, kToyWords, 1 + uniform_index(rng, 3));
                const auto items = draw_distinct(rng, kToyItems, clicks);
                h.events.push_back(BehaviorEvent::search(u, time, query, items, std::vector<CategoryId>(clicks, 0)));
            } else {
                const auto item = static_cast<ItemId>(uniform_index(rng, kToyItems));
                h.events.push_back(BehaviorEvent::rec(u, time, item, 0));
            }
        }
        auto owner = std::make_shared<const UserHistory>(std::move(h));
        const BehaviorEvent& target = owner->events.back();
        Sample s;
        s.user = u;
        s.scenario = target.scenario;
        s.target_item = target.is_search() ? target.clicked.front() : target.item;
        if (target.is_search()) s.query = target.query;
        s.history = HistoryView(owner, 0, o.history_len);
        s.label = 1;
        s.time = target.time;
        toy.data.histories.push_back(owner);
        toy.data.samples.push_back(std::move(s));
    }
    toy.data.vocab = {n_users, kToyItems, kToyWords, 1};

    Rng neg = substream(o.seed, "negatives");
    toy.groups = build_training_groups(toy.data.samples, toy.data.vocab, 2, neg);
    for (const auto& g : toy.groups) toy.batch.groups.push_back(&g);
    Rng rel = substream(o.seed, "negatives", 1);
    toy.batch.rel_pairs = build_relevance_pairs(toy.batch.groups, query_pool(toy.data), kToyItems, 3, rel);

    ModelConfig mc;
    mc.d = o.d;
    mc.heads = 2;
    mc.max_history_len = o.history_len;
    mc.expert_hidden = o.d;
    mc.mask_mode = o.mask_mode;
    mc.plain_blocks = o.plain_blocks;
    mc.literal_denominator = o.literal_denominator;
    toy.bundle = std::make_unique<ModelBundle>(toy.data.vocab, mc, o.flags);
    toy.bundle->initialize(o.seed);
    return toy;
}

GradCheckResult gradcheck_toy(ToyProblem& toy, const GradCheckOptions& options) {
    const UniSARModel& model = toy.model();
    LossFunction loss = [&](bool accumulate) { return total_loss(model, toy.batch, toy.weights, accumulate).total; };
    return grad_check(loss, toy.bundle->store(), options);
}

} // namespace unisar
