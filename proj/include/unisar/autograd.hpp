#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate Matrix produced by the ops below together
// with a closure that pushes the node's gradient back to its inputs. Learnable
// state lives in Parameters owned by a ParameterStore; a tape references them
// through leaf nodes and scatters gradients straight into Parameter::grad when
// backward() runs. Tapes are cheap, single-use and not thread-safe; build one
// per forward pass.

#include "unisar/matrix.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace unisar {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
    void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters with stable addresses, addressable by unique name.
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    Parameter& create(const std::string& name, std::size_t rows, std::size_t cols, double fill = 0.0);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& at(const std::string& name);

    std::size_t size() const { return params_.size(); }
    std::size_t total_entries() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();

    /// Copies of every value keyed by name, for best-so-far checkpoints.
    std::map<std::string, Matrix> snapshot() const;
    void restore(const std::map<std::string, Matrix>& values);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const;
};

class Tape {
public:
    /// With record=false no backward closures are stored (inference mode).
    explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var constant(Matrix value);
    /// A leaf that collects gradient without belonging to any Parameter.
    Var input(Matrix value);
    /// Leaf bound to a parameter; repeated calls return the same node.
    Var param(Parameter& p);
    /// Rows of a parameter table; gradients scatter back into the table.
    Var gather(Parameter& table, std::span<const std::int32_t> rows);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    /// Gradient accumulated on a node so far (zero-shaped when none arrived).
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
    /// Adds `seed` to the node's gradient; used to inject upstream gradients.
    void seed(Var v, const Matrix& g);

    /// Seeds a scalar node with `weight` and propagates to every leaf.
    void backward(Var loss, double weight = 1.0);
    /// Propagates whatever gradients were seeded beforehand.
    void backward();

    std::size_t node_count() const { return nodes_.size(); }

    // Internal API used by op implementations.
    using Backward = std::function<void(Tape&, std::int32_t self)>;
    Var push(Matrix value, bool requires_grad, Backward back);
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    Matrix& grad_ref(std::int32_t id);
    const Matrix& grad_of(std::int32_t id) const { return nodes_[id].grad; }
    const Matrix& value_of(std::int32_t id) const { return nodes_[id].value; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward back;
    };

    bool record_;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::int32_t> param_nodes_;
};

// ---- ops ----------------------------------------------------------------

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Multiplies every entry of `a` by the 1x1 node `s`.
Var scale_by(Var a, Var s);
/// Adds a 1 x cols row to every row of `a`.
Var add_row(Var a, Var row);
/// Adds a constant matrix (no gradient to the constant).
Var add_const(Var a, const Matrix& c);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Tanh approximation of GELU.
Var gelu(Var a);
/// log(1 + e^x) evaluated stably.
Var softplus(Var a);

Var softmax_rows(Var a);

enum class MaskMode { additive, hadamard_literal };

/// Softmax over each row of `logits` restricted by a 0/1 `allowed` matrix.
/// additive: disallowed entries get weight 0 (equivalent to adding -1e9) and a
/// row with nothing allowed yields all zeros. hadamard_literal: the logits are
/// multiplied by `allowed` before an ordinary softmax.
Var masked_softmax_rows(Var logits, const Matrix& allowed, MaskMode mode);

/// Per-row log-sum-exp, n x 1.
Var logsumexp_rows(Var a);
/// Log-sum-exp over the entries of each row where `allowed` is nonzero.
/// Rows with nothing allowed evaluate to 0 and receive no gradient.
Var masked_logsumexp_rows(Var a, const Matrix& allowed);
/// Per-row layer normalization with learnable gain/bias rows (eps 1e-5).
Var layer_norm_rows(Var x, Var gain, Var bias);

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Selects rows of `a` in the given order (indices may repeat).
Var select_rows(Var a, std::span<const std::int32_t> rows);
/// Repeats a 1 x c row n times.
Var repeat_row(Var row, std::size_t n);

Var sum_all(Var a);
/// Row sums, n x 1.
Var sum_rows(Var a);
/// Column means as 1 x c; a 0-row input yields the zero row.
Var mean_rows(Var a);
/// Scalar sum of a ⊙ g for a constant g.
Var dot_const(Var a, const Matrix& g);
/// Entry (r, c) as a 1x1 node.
Var pick(Var a, std::size_t r, std::size_t c);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

} // namespace unisar
