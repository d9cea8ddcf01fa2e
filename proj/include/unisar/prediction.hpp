#pragma once

// Target attention over fused histories, the shared bottom and the
// multi-gate mixture-of-experts scorer.

#include "unisar/autograd.hpp"
#include "unisar/datamodel.hpp"

#include <string>
#include <vector>

namespace unisar {

struct TargetAttentionParams {
    Parameter* w_s = nullptr;
    Parameter* w_r = nullptr;

    static TargetAttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t d);
};

/// v = V^T softmax(V W e_i^T), returned as a 1 x d row; an empty V gives zeros.
Var aggregate_history(Var v, Var w, Var e_i);
/// Row k is aggregate_history(v, w, candidates[k]); m x d.
Var aggregate_history_batch(Var v, Var w, Var candidates);

/// Concat(e_u, e_i, e_q, v_s, v_r) along columns; every part has the same row
/// count and d columns.
Var build_shared_bottom(Var e_u, Var e_i, Var e_q, Var v_s, Var v_r);

/// A group of n scalar-output experts d_b -> hidden (tanh) -> 1 sharing one
/// set of stacked parameters.
struct ExpertGroup {
    std::size_t count = 0;
    std::size_t hidden = 0;
    Parameter* w1 = nullptr; // d_b x (count * hidden)
    Parameter* b1 = nullptr; // 1 x (count * hidden)
    Parameter* w2 = nullptr; // 1 x (count * hidden)
    Parameter* b2 = nullptr; // 1 x count

    static ExpertGroup create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t count, std::size_t hidden);
    /// m x count expert outputs.
    Var forward(Var x) const;
};

struct MMoEParams {
    ExpertGroup shared;  // O_m
    ExpertGroup search;  // O_s
    ExpertGroup rec;     // O_r
    Parameter* gate_s = nullptr; // (n_s + n_m) x d_b
    Parameter* gate_r = nullptr; // (n_r + n_m) x d_b

    static MMoEParams create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                             std::size_t n_shared, std::size_t n_search, std::size_t n_rec, std::size_t hidden);
};

struct MMoEOutput {
    Var logit; // m x 1, pre-sigmoid mixture
    Var gates; // m x (n_specific + n_shared), specific experts first
};

/// Gated mixture for one scenario; score = sigmoid(logit).
MMoEOutput mmoe_forward(const MMoEParams& p, Var x, Scenario scenario);

/// Score-space convenience for a single bottom vector.
double mmoe_score(const MMoEParams& p, const Matrix& x, Scenario scenario);

} // namespace unisar
