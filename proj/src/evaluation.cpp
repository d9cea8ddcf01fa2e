#include "unisar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace unisar {

int hr_at_k(int rank, int k) {
    if (k < 1) throw std::invalid_argument("cutoff k must be at least 1");
    if (rank < 1) throw std::invalid_argument("rank must be at least 1");
    return rank <= k ? 1 : 0;
}

double ndcg_at_k(int rank, int k) {
    if (hr_at_k(rank, k) == 0) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

int pessimistic_rank(std::span<const double> scores, std::size_t truth_index) {
    if (truth_index >= scores.size()) throw std::out_of_range("truth index outside the candidate list");
    const double truth = scores[truth_index];
    int rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != truth_index && scores[j] >= truth) ++rank;
    }
    return rank;
}

std::vector<ItemId> sample_unseen_items(std::span<const ItemId> interacted_sorted, std::int32_t n_items,
                                        std::size_t n, Rng& rng) {
    const std::size_t available = static_cast<std::size_t>(n_items) - interacted_sorted.size();
    if (n > available) {
        throw std::runtime_error("user interacted with too many items to draw " + std::to_string(n) +
                                 " unseen negatives");
    }
    std::vector<ItemId> out;
    std::unordered_set<ItemId> taken;
    while (out.size() < n) {
        const auto item = static_cast<ItemId>(uniform_index(rng, static_cast<std::uint64_t>(n_items)));
        if (std::binary_search(interacted_sorted.begin(), interacted_sorted.end(), item)) continue;
        if (!taken.insert(item).second) continue;
        out.push_back(item);
    }
    return out;
}

Group make_ranking_group(const Sample& sample, std::span<const ItemId> negatives) {
    Group g;
    g.user = sample.user;
    g.scenario = sample.scenario;
    g.query = sample.query;
    g.history = sample.history;
    g.candidates.push_back(sample.target_item);
    g.candidates.insert(g.candidates.end(), negatives.begin(), negatives.end());
    g.labels.assign(g.candidates.size(), 0.0);
    g.labels[0] = 1.0;
    return g;
}

int rank_and_score(const ModelBundle& model, const Sample& sample, std::span<const ItemId> negatives) {
    const Group g = make_ranking_group(sample, negatives);
    return pessimistic_rank(model.model_for(sample.scenario).score_group(g), 0);
}

void ScenarioMetrics::add_rank(int rank) {
    ++count;
    hr1 += hr_at_k(rank, 1);
    hr5 += hr_at_k(rank, 5);
    hr10 += hr_at_k(rank, 10);
    ndcg5 += ndcg_at_k(rank, 5);
    ndcg10 += ndcg_at_k(rank, 10);
}

void ScenarioMetrics::finalize() {
    if (count == 0) return;
    const double n = static_cast<double>(count);
    hr1 /= n;
    hr5 /= n;
    hr10 /= n;
    ndcg5 /= n;
    ndcg10 /= n;
}

double MetricReport::mean_ndcg10() const {
    double sum = 0;
    int n = 0;
    for (const auto* m : {&search, &rec}) {
        if (m->count == 0) continue;
        sum += m->ndcg10;
        ++n;
    }
    return n == 0 ? 0.0 : sum / n;
}

double MetricReport::mean_ndcg5() const {
    double sum = 0;
    int n = 0;
    for (const auto* m : {&search, &rec}) {
        if (m->count == 0) continue;
        sum += m->ndcg5;
        ++n;
    }
    return n == 0 ? 0.0 : sum / n;
}

void MetricReport::write_csv(std::ostream& out) const {
    out << "scenario,metric,value\n";
    out << std::setprecision(17);
    for (Scenario s : {Scenario::rec, Scenario::search}) {
        const ScenarioMetrics& m = of(s);
        if (m.count == 0) continue;
        const char* name = scenario_name(s);
        out << name << ",HR@1," << m.hr1 << '\n';
        out << name << ",HR@5," << m.hr5 << '\n';
        out << name << ",HR@10," << m.hr10 << '\n';
        out << name << ",NDCG@5," << m.ndcg5 << '\n';
        out << name << ",NDCG@10," << m.ndcg10 << '\n';
        out << name << ",count," << m.count << '\n';
    }
}

void MetricReport::print_table(std::ostream& out) const {
    out << std::left << std::setw(10) << "scenario" << std::right;
    for (const char* h : {"HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10"}) out << std::setw(10) << h;
    out << std::setw(10) << "count" << '\n';
    out << std::fixed << std::setprecision(4);
    for (Scenario s : {Scenario::rec, Scenario::search}) {
        const ScenarioMetrics& m = of(s);
        if (m.count == 0) continue;
        out << std::left << std::setw(10) << scenario_name(s) << std::right << std::setw(10) << m.hr1
            << std::setw(10) << m.hr5 << std::setw(10) << m.hr10 << std::setw(10) << m.ndcg5 << std::setw(10)
            << m.ndcg10 << std::setw(10) << m.count << '\n';
    }
    out << std::defaultfloat;
}

MetricReport evaluate_scorer(const GroupScorer& scorer, const Dataset& test, std::int32_t n_items,
                             const EvalOptions& options) {
    std::vector<const Sample*> eligible;
    for (const auto& s : test.samples) {
        if (s.label != 1) continue;
        if (options.only && s.scenario != *options.only) continue;
        eligible.push_back(&s);
    }
    if (options.max_instances > 0 && eligible.size() > options.max_instances) eligible.resize(options.max_instances);
    if (eligible.empty()) throw std::invalid_argument("evaluation set has no instances");

    std::unordered_map<const UserHistory*, std::vector<ItemId>> seen;
    MetricReport report;
    for (std::size_t k = 0; k < eligible.size(); ++k) {
        const Sample& s = *eligible[k];
        const UserHistory* owner = s.history.owner();
        if (owner == nullptr) throw std::invalid_argument("evaluation sample without an owning history");
        auto it = seen.find(owner);
        if (it == seen.end()) it = seen.emplace(owner, interacted_items(*owner)).first;
        Rng rng = substream(options.seed, "eval", k);
        const std::vector<ItemId> negatives = sample_unseen_items(it->second, n_items, options.n_negatives, rng);
        const Group g = make_ranking_group(s, negatives);
        const std::vector<double> scores = scorer(g);
        const int rank = pessimistic_rank(scores, 0);
        (s.scenario == Scenario::search ? report.search : report.rec).add_rank(rank);
    }
    report.search.finalize();
    report.rec.finalize();
    return report;
}

MetricReport evaluate(const ModelBundle& model, const Dataset& test, const EvalOptions& options) {
    GroupScorer scorer = [&model](const Group& g) { return model.model_for(g.scenario).score_group(g); };
    return evaluate_scorer(scorer, test, model.vocab().n_items, options);
}

double TransitionStats::percentage(Scenario from, Scenario to) const {
    const auto f = static_cast<int>(from), t = static_cast<int>(to);
    if (count[f][t] == 0) return 0.0;
    return 100.0 * static_cast<double>(correlated[f][t]) / static_cast<double>(count[f][t]);
}

void TransitionStats::write_csv(std::ostream& out) const {
    out << "from_scenario,to_scenario,correlated_pct,count\n";
    out << std::setprecision(10);
    const std::pair<Scenario, Scenario> order[] = {{Scenario::rec, Scenario::rec},
                                                   {Scenario::search, Scenario::rec},
                                                   {Scenario::search, Scenario::search},
                                                   {Scenario::rec, Scenario::search}};
    for (auto [from, to] : order) {
        out << scenario_name(from) << ',' << scenario_name(to) << ',' << percentage(from, to) << ','
            << count[static_cast<int>(from)][static_cast<int>(to)] << '\n';
    }
}

TransitionStats transition_correlation(const Dataset& dataset) {
    TransitionStats stats;
    for (const auto& h : dataset.histories) {
        bool have_prev = false;
        Scenario prev_s = Scenario::rec;
        CategoryId prev_c = kNoCategory;
        for (const auto& e : h->events) {
            const std::vector<ItemId> clicks = e.clicked_items();
            if (e.categories.size() != clicks.size()) {
                throw std::invalid_argument("user " + std::to_string(e.user) + " at time " + std::to_string(e.time) +
                                            ": clicks lack category ids");
            }
            for (CategoryId c : e.categories) {
                if (c == kNoCategory) {
                    throw std::invalid_argument("user " + std::to_string(e.user) + " at time " +
                                                std::to_string(e.time) + ": missing category id");
                }
                if (have_prev) {
                    const auto f = static_cast<int>(prev_s), t = static_cast<int>(e.scenario);
                    ++stats.count[f][t];
                    if (c == prev_c) ++stats.correlated[f][t];
                }
                have_prev = true;
                prev_s = e.scenario;
                prev_c = c;
            }
        }
    }
    return stats;
}

} // namespace unisar
