#include "unisar/prediction.hpp"

namespace unisar {

TargetAttentionParams TargetAttentionParams::create(ParameterStore& store, const std::string& prefix,
                                                    std::size_t d) {
    return {&store.create(prefix + ".w_s", d, d), &store.create(prefix + ".w_r", d, d)};
}

Var aggregate_history(Var v, Var w, Var e_i) {
    if (e_i.rows() != 1) throw ShapeError("aggregate_history expects a single target row");
    return aggregate_history_batch(v, w, e_i);
}

Var aggregate_history_batch(Var v, Var w, Var candidates) {
    const std::size_t d = candidates.cols();
    if (w.rows() != d || w.cols() != d) throw ShapeError("target attention matrix must be d x d");
    if (v.rows() == 0) return candidates.tape->constant(Matrix(candidates.rows(), d));
    if (v.cols() != d) throw ShapeError("history and candidates differ in width");
    // logits[k][j] = V_j W e_k^T = (E W^T V^T)[k][j]
    Var logits = matmul_nt(matmul_nt(candidates, w), v);
    return matmul(softmax_rows(logits), v);
}

Var build_shared_bottom(Var e_u, Var e_i, Var e_q, Var v_s, Var v_r) {
    const std::size_t d = e_u.cols();
    const std::size_t m = e_u.rows();
    for (Var part : {e_i, e_q, v_s, v_r}) {
        if (part.cols() != d || part.rows() != m) {
            throw ShapeError("shared bottom part " + part.value().shape_string() + " differs from " +
                             e_u.value().shape_string());
        }
    }
    std::vector<Var> parts{e_u, e_i, e_q, v_s, v_r};
    return concat_cols(parts);
}

ExpertGroup ExpertGroup::create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                                std::size_t count, std::size_t hidden) {
    ExpertGroup g;
    g.count = count;
    g.hidden = hidden;
    if (count == 0) return g;
    g.w1 = &store.create(prefix + ".w1", input_dim, count * hidden);
    g.b1 = &store.create(prefix + ".b1", 1, count * hidden);
    g.w2 = &store.create(prefix + ".w2", 1, count * hidden);
    g.b2 = &store.create(prefix + ".b2", 1, count);
    return g;
}

Var ExpertGroup::forward(Var x) const {
    Tape& t = *x.tape;
    const std::size_t m = x.rows();
    if (count == 0) return t.constant(Matrix(m, 0));
    Var h = tanh(add_row(matmul(x, t.param(*w1)), t.param(*b1)));
    Var weighted = hadamard(h, repeat_row(t.param(*w2), m));
    // Block-sum each expert's hidden units into its scalar output.
    Matrix blocks(count * hidden, count);
    for (std::size_t e = 0; e < count; ++e)
        for (std::size_t k = 0; k < hidden; ++k) blocks(e * hidden + k, e) = 1.0;
    return add_row(matmul(weighted, t.constant(std::move(blocks))), t.param(*b2));
}

MMoEParams MMoEParams::create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t n_shared, std::size_t n_search, std::size_t n_rec, std::size_t hidden) {
    if (n_shared + n_search == 0 || n_shared + n_rec == 0) {
        throw std::invalid_argument("each scenario needs at least one expert");
    }
    MMoEParams p;
    p.shared = ExpertGroup::create(store, prefix + ".shared", input_dim, n_shared, hidden);
    p.search = ExpertGroup::create(store, prefix + ".search", input_dim, n_search, hidden);
    p.rec = ExpertGroup::create(store, prefix + ".rec", input_dim, n_rec, hidden);
    p.gate_s = &store.create(prefix + ".gate_s", n_search + n_shared, input_dim);
    p.gate_r = &store.create(prefix + ".gate_r", n_rec + n_shared, input_dim);
    return p;
}

MMoEOutput mmoe_forward(const MMoEParams& p, Var x, Scenario scenario) {
    Tape& t = *x.tape;
    const bool search = scenario == Scenario::search;
    const ExpertGroup& specific = search ? p.search : p.rec;
    Parameter& gate = search ? *p.gate_s : *p.gate_r;
    if (x.cols() != gate.value.cols()) throw ShapeError("shared bottom width does not match the gate");

    std::vector<Var> outs;
    if (specific.count > 0) outs.push_back(specific.forward(x));
    if (p.shared.count > 0) outs.push_back(p.shared.forward(x));
    Var experts = outs.size() == 1 ? outs[0] : concat_cols(outs);
    Var gates = softmax_rows(matmul_nt(x, t.param(gate)));
    return {sum_rows(hadamard(gates, experts)), gates};
}

double mmoe_score(const MMoEParams& p, const Matrix& x, Scenario scenario) {
    Tape t(false);
    return sigmoid(mmoe_forward(p, t.constant(x), scenario).logit).scalar();
}

} // namespace unisar
