#pragma once

#include "unisar/datamodel.hpp"
#include "unisar/model.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace unisar {

/// 1 iff rank <= k. Throws std::invalid_argument for k < 1 or rank < 1.
int hr_at_k(int rank, int k);
/// 1 / log2(rank + 1) when rank <= k, else 0.
double ndcg_at_k(int rank, int k);

/// 1 + (#candidates scoring above the truth) + (#other candidates tying it).
int pessimistic_rank(std::span<const double> scores, std::size_t truth_index = 0);

/// `n` distinct items the owner never clicked, drawn uniformly without replacement.
std::vector<ItemId> sample_unseen_items(std::span<const ItemId> interacted_sorted, std::int32_t n_items,
                                        std::size_t n, Rng& rng);

/// Candidate group for ranking: the ground truth first, then the negatives.
Group make_ranking_group(const Sample& sample, std::span<const ItemId> negatives);

/// Rank of the ground truth among itself and `negatives` under the scenario's head.
int rank_and_score(const ModelBundle& model, const Sample& sample, std::span<const ItemId> negatives);

struct ScenarioMetrics {
    std::size_t count = 0;
    double hr1 = 0, hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0;

    void add_rank(int rank);
    /// Converts accumulated sums into means.
    void finalize();
};

struct MetricReport {
    ScenarioMetrics search;
    ScenarioMetrics rec;

    const ScenarioMetrics& of(Scenario s) const { return s == Scenario::search ? search : rec; }
    /// Mean NDCG@10 over the scenarios that have instances.
    double mean_ndcg10() const;
    double mean_ndcg5() const;
    void write_csv(std::ostream& out) const;
    void print_table(std::ostream& out) const;
};

struct EvalOptions {
    std::size_t n_negatives = 99;
    std::uint64_t seed = 0;
    /// Evaluate only the first N instances (0: all).
    std::size_t max_instances = 0;
    /// Restrict to one scenario.
    std::optional<Scenario> only;
};

using GroupScorer = std::function<std::vector<double>(const Group&)>;

/// Ranks every eligible sample with the given scorer. Negatives for instance
/// k come from substream(seed, "eval", k).
MetricReport evaluate_scorer(const GroupScorer& scorer, const Dataset& test, std::int32_t n_items,
                             const EvalOptions& options);
MetricReport evaluate(const ModelBundle& model, const Dataset& test, const EvalOptions& options);

struct TransitionStats {
    // Indexed [from][to] by Scenario value: search = 0, rec = 1.
    std::size_t count[2][2] = {{0, 0}, {0, 0}};
    std::size_t correlated[2][2] = {{0, 0}, {0, 0}};

    double percentage(Scenario from, Scenario to) const;
    void write_csv(std::ostream& out) const;
};

/// Consecutive click pairs per user (search clicks expanded per clicked item),
/// grouped by (previous scenario -> current scenario), with the share whose
/// categories match. Throws std::invalid_argument when a click lacks a category.
TransitionStats transition_correlation(const Dataset& dataset);

} // namespace unisar
