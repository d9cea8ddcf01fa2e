#pragma once

#include "unisar/evaluation.hpp"
#include "unisar/model.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace unisar {

struct LossWeights {
    double alpha = 1e-3;  // L_Rel
    double beta = 1e-1;   // L_Align
    double gamma = 0.5;   // search vs rec trade-off
    double lambda = 1e-5; // L2

    void validate() const;
};

struct TrainConfig {
    std::size_t batch_size = 1024; // groups (one positive with its negatives) per step
    std::size_t max_epochs = 100;
    std::size_t patience = 3;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t neg_per_pos = 4;
    std::size_t rel_negatives = 4;   // sampled negative items and queries per relevance pair
    std::size_t max_valid_instances = 0; // 0: whole validation set
    std::uint64_t seed = 2024;

    void validate() const;
};

/// Weight applied to each loss term of one model.
struct TermWeights {
    double click_r = 0, click_s = 0, rel = 0, align = 0, lambda = 0;
};

/// Joint: L_R + γ L_S + λ‖Θ‖² with L_x = L^x_Click + α L_Rel + β L_Align.
/// A single-task model keeps only its own scenario's L_x.
TermWeights term_weights(const UniSARModel& model, const LossWeights& weights);

struct LossBreakdown {
    double click_r = 0, click_s = 0, rel = 0, align = 0, l2 = 0; // unweighted terms (l2 = Σθ²)
    double total = 0;
    std::size_t n_rec = 0, n_search = 0; // scored candidates per scenario
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean binary cross-entropy of probabilities in (0,1); empty input gives 0.
double click_loss(std::span<const double> scores, std::span<const double> labels);
/// Same on pre-sigmoid logits (m x 1) via softplus(z) − y z.
Var click_loss_from_logits(Var logits, std::span<const double> labels);

struct Batch {
    std::vector<const Group*> groups;
    std::vector<RelevancePair> rel_pairs;
};

/// Evaluates every term for `batch`. With `accumulate`, adds the gradient of
/// the weighted total into the model's Parameter::grad.
LossBreakdown total_loss(const UniSARModel& model, const Batch& batch, const LossWeights& weights, bool accumulate);

/// Per positive, k label-0 copies whose targets are items the user never
/// clicked (distinct while possible). Output keeps each positive followed by
/// its negatives.
std::vector<Sample> sample_negatives(std::span<const Sample> positives, const Vocab& vocab, std::size_t k, Rng& rng);
/// Groups built from sample_negatives output, one per positive.
std::vector<Group> build_training_groups(std::span<const Sample> positives, const Vocab& vocab, std::size_t k,
                                         Rng& rng);

/// Distinct training queries, the pool for relevance-loss negatives.
std::vector<std::vector<WordId>> query_pool(const Dataset& train);
/// One pair per positive search group in `groups`.
std::vector<RelevancePair> build_relevance_pairs(std::span<const Group* const> groups,
                                                 std::span<const std::vector<WordId>> pool, std::int32_t n_items,
                                                 std::size_t n_negatives, Rng& rng);

class Adam {
public:
    Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step();
    std::size_t steps() const { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown train;
    double total = 0; // mean weighted total over batches
    std::optional<double> valid_ndcg10_r, valid_ndcg10_s;
};

struct ModelFitLog {
    std::string model;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    double best_metric = -1;
};

struct FitResult {
    std::vector<ModelFitLog> models;
    /// Epoch-aligned CSV with the documented columns.
    void write_log(std::ostream& out, const AblationFlags& flags) const;
};

/// Adam over shuffled batches with per-epoch validation; every model of the
/// bundle keeps its best-so-far parameters and stops after `patience`
/// epochs without improvement.
FitResult fit(ModelBundle& bundle, const Dataset& train, const Dataset& valid, const TrainConfig& config,
              const LossWeights& weights, std::ostream* progress = nullptr);

// ---- parameter files ------------------------------------------------------

inline constexpr std::uint32_t kParamFileVersion = 1;

void save_params(const ParameterStore& store, std::ostream& sink);
void save_params_file(const ParameterStore& store, const std::string& path);
/// Reads every entry of a parameter file.
std::map<std::string, Matrix> read_params(std::istream& source);
/// Loads into an existing store; every store parameter must be present with
/// matching shape and the file may not carry unknown names.
void load_params(ParameterStore& store, std::istream& source);
void load_params_file(ParameterStore& store, const std::string& path);

} // namespace unisar
