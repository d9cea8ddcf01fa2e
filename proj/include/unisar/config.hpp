#pragma once

// Run configuration: a JSON document (// comments allowed) with the sections
// model, weights, train, eval, data and ablation plus a top-level seed.
// Unknown keys are rejected.

#include "unisar/datamodel.hpp"
#include "unisar/model.hpp"
#include "unisar/training.hpp"

#include <stdexcept>
#include <string>

namespace unisar {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EvalConfig {
    std::size_t n_negatives = 99;
    std::size_t max_instances = 0; // 0: every test instance
};

struct DataConfig {
    std::string event_log;              // empty: generate synthetic data
    std::string split = "leave_one_out"; // or "temporal"
    Timestamp valid_from = 0;
    Timestamp test_from = 0;
    std::size_t min_interactions = 0;
    std::size_t max_train_targets_per_user = 0;
    SyntheticConfig synthetic;
};

struct RunConfig {
    std::uint64_t seed = 42;
    ModelConfig model;
    LossWeights weights;
    TrainConfig train;
    EvalConfig eval;
    DataConfig data;
    AblationFlags ablation;

    /// Propagates the run seed into the seeded components.
    void apply_seed(std::uint64_t s);
    void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string config_to_json(const RunConfig& cfg);
/// JSON with a comment on every key saying whether its default is a
/// published setting or a local choice.
std::string annotated_config(const RunConfig& cfg);
/// "section.key=value" where value is JSON (bare words are taken as strings).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// The configured event log, or the synthetic generator's output, after the
/// optional minimum-interaction filter.
Dataset load_dataset(const RunConfig& cfg);
Split make_split(const RunConfig& cfg, const Dataset& data);

} // namespace unisar
