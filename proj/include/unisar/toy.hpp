#pragma once

// A tiny fully-specified problem (d = 8, histories of 6 events, 4 groups)
// used by the gradient check command, tests and the Python smoke tests.

#include "unisar/gradcheck.hpp"
#include "unisar/training.hpp"

#include <memory>

namespace unisar {

struct ToyOptions {
    std::uint64_t seed = 7;
    std::size_t d = 8;
    std::size_t history_len = 6;
    std::size_t batch = 4;
    MaskMode mask_mode = MaskMode::additive;
    bool plain_blocks = false;
    bool literal_denominator = false;
    AblationFlags flags;
    LossWeights weights{0.1, 0.1, 0.5, 1e-4};
};

struct ToyProblem {
    Dataset data;
    std::vector<Group> groups;
    Batch batch;
    LossWeights weights;
    std::unique_ptr<ModelBundle> bundle;

    const UniSARModel& model() const { return *bundle->models().front(); }
};

ToyProblem make_toy_problem(const ToyOptions& options = {});

/// Gradient check of total_loss on the toy batch (first model of the bundle).
GradCheckResult gradcheck_toy(ToyProblem& toy, const GradCheckOptions& options = {});

} // namespace unisar
