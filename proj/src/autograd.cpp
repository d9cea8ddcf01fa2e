#include "unisar/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace unisar {

// ---- ParameterStore ------------------------------------------------------

Parameter& ParameterStore::create(const std::string& name, std::size_t rows, std::size_t cols, double fill) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter>(name, Matrix(rows, cols, fill)));
    return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw std::out_of_range("unknown parameter: " + name);
    return *p;
}

std::size_t ParameterStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

std::map<std::string, Matrix> ParameterStore::snapshot() const {
    std::map<std::string, Matrix> out;
    for (const auto& p : params_) out.emplace(p->name, p->value);
    return out;
}

void ParameterStore::restore(const std::map<std::string, Matrix>& values) {
    for (auto& p : params_) {
        auto it = values.find(p->name);
        if (it == values.end()) throw std::out_of_range("snapshot lacks parameter " + p->name);
        if (!it->second.same_shape(p->value)) throw ShapeError("snapshot shape mismatch for " + p->name);
        p->value = it->second;
    }
}

// ---- Var / Tape ----------------------------------------------------------

const Matrix& Var::value() const { return tape->value(*this); }

double Var::scalar() const {
    const Matrix& m = value();
    if (m.size() != 1) throw ShapeError("scalar() on " + m.shape_string());
    return m[0];
}

Var Tape::push(Matrix value, bool requires_grad, Backward back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Matrix& Tape::grad_ref(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) {
    return push(std::move(value), true, [](Tape&, std::int32_t) {});
}

Var Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Parameter* ptr = &p;
    Var v = push(p.value, true, [ptr](Tape& t, std::int32_t self) { ptr->grad += t.grad_of(self); });
    param_nodes_.emplace(&p, v.id);
    return v;
}

Var Tape::gather(Parameter& table, std::span<const std::int32_t> rows) {
    const std::size_t d = table.value.cols();
    Matrix out(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = static_cast<std::size_t>(rows[r]);
        if (rows[r] < 0 || src >= table.value.rows()) {
            throw std::out_of_range("row " + std::to_string(rows[r]) + " outside " + table.name + " " +
                                    table.value.shape_string());
        }
        std::copy_n(table.value.row(src).begin(), d, out.row(r).begin());
    }
    Parameter* ptr = &table;
    std::vector<std::int32_t> idx(rows.begin(), rows.end());
    return push(std::move(out), true, [ptr, idx = std::move(idx)](Tape& t, std::int32_t self) {
        const Matrix& g = t.grad_of(self);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto dst = ptr->grad.row(static_cast<std::size_t>(idx[r]));
            auto src = g.row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    });
}

void Tape::seed(Var v, const Matrix& g) {
    Matrix& dst = grad_ref(v.id);
    dst += g;
}

void Tape::backward(Var loss, double weight) {
    if (value(loss).size() != 1) throw ShapeError("backward() needs a scalar loss");
    grad_ref(loss.id)[0] += weight;
    backward();
}

void Tape::backward() {
    if (!record_) throw std::logic_error("backward() on a non-recording tape");
    for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty() || !n.back) continue;
        n.back(*this, i);
    }
}

// ---- ops -------------------------------------------------------------------

namespace {

bool any_grad(Var a) { return a.tape->requires_grad(a); }
bool any_grad(Var a, Var b) { return a.tape->requires_grad(a) || b.tape->requires_grad(b); }

void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::logic_error("vars from different tapes");
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

template <typename F, typename DF>
Var elementwise(Var a, F f, DF df) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    const std::int32_t ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia, df](Tape& tp, std::int32_t self) {
        if (!tp.requires_grad(Var{&tp, ia})) return;
        const Matrix& g = tp.grad_of(self);
        const Matrix& x = tp.value_of(ia);
        const Matrix& y = tp.value_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

} // namespace

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    Matrix out(t.value(a).rows(), t.value(b).cols());
    gemm(t.value(a), false, t.value(b), false, out);
    const auto ia = a.id, ib = b.id;
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        if (tp.requires_grad(Var{&tp, ia})) gemm(g, false, tp.value_of(ib), true, tp.grad_ref(ia));
        if (tp.requires_grad(Var{&tp, ib})) gemm(tp.value_of(ia), true, g, false, tp.grad_ref(ib));
    });
}

Var matmul_nt(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    Matrix out(t.value(a).rows(), t.value(b).rows());
    gemm(t.value(a), false, t.value(b), true, out);
    const auto ia = a.id, ib = b.id;
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        if (tp.requires_grad(Var{&tp, ia})) gemm(g, false, tp.value_of(ib), false, tp.grad_ref(ia));
        if (tp.requires_grad(Var{&tp, ib})) gemm(g, true, tp.value_of(ia), false, tp.grad_ref(ib));
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const auto ia = a.id;
    return t.push(transpose(t.value(a)), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
    });
}

Var add(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    check_same_shape(t.value(a), t.value(b), "add");
    Matrix out = t.value(a);
    out += t.value(b);
    const auto ia = a.id, ib = b.id;
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        if (tp.requires_grad(Var{&tp, ia})) tp.grad_ref(ia) += g;
        if (tp.requires_grad(Var{&tp, ib})) tp.grad_ref(ib) += g;
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    check_same_shape(t.value(a), t.value(b), "sub");
    Matrix out = t.value(a);
    const Matrix& vb = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    const auto ia = a.id, ib = b.id;
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        if (tp.requires_grad(Var{&tp, ia})) tp.grad_ref(ia) += g;
        if (tp.requires_grad(Var{&tp, ib})) {
            Matrix& gb = tp.grad_ref(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var hadamard(Var a, Var b) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    check_same_shape(t.value(a), t.value(b), "hadamard");
    Matrix out = t.value(a);
    const Matrix& vb = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    const auto ia = a.id, ib = b.id;
    return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        const Matrix& va = tp.value_of(ia);
        const Matrix& vb = tp.value_of(ib);
        if (tp.requires_grad(Var{&tp, ia})) {
            Matrix& ga = tp.grad_ref(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (tp.requires_grad(Var{&tp, ib})) {
            Matrix& gb = tp.grad_ref(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Matrix out = t.value(a);
    out *= s;
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia, s](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

Var scale_by(Var a, Var s) {
    check_same_tape(a, s);
    Tape& t = *a.tape;
    if (t.value(s).size() != 1) throw ShapeError("scale_by expects a 1x1 scale");
    const double sv = t.value(s)[0];
    Matrix out = t.value(a);
    out *= sv;
    const auto ia = a.id, is = s.id;
    return t.push(std::move(out), any_grad(a, s), [ia, is](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        const double sv = tp.value_of(is)[0];
        const Matrix& va = tp.value_of(ia);
        if (tp.requires_grad(Var{&tp, ia})) {
            Matrix& ga = tp.grad_ref(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
        }
        if (tp.requires_grad(Var{&tp, is})) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
            tp.grad_ref(is)[0] += acc;
        }
    });
}

Var add_row(Var a, Var row) {
    check_same_tape(a, row);
    Tape& t = *a.tape;
    const Matrix& r = t.value(row);
    if (r.rows() != 1 || r.cols() != t.value(a).cols()) {
        throw ShapeError("add_row: " + r.shape_string() + " onto " + t.value(a).shape_string());
    }
    Matrix out = t.value(a);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
    const auto ia = a.id, ir = row.id;
    return t.push(std::move(out), any_grad(a, row), [ia, ir](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        if (tp.requires_grad(Var{&tp, ia})) tp.grad_ref(ia) += g;
        if (tp.requires_grad(Var{&tp, ir})) {
            Matrix& gr = tp.grad_ref(ir);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
        }
    });
}

Var add_const(Var a, const Matrix& c) {
    Tape& t = *a.tape;
    check_same_shape(t.value(a), c, "add_const");
    Matrix out = t.value(a);
    out += c;
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a),
                  [ia](Tape& tp, std::int32_t self) { tp.grad_ref(ia) += tp.grad_of(self); });
}

Var exp(Var a) {
    return elementwise(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return elementwise(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
    return elementwise(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return elementwise(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    constexpr double k = 0.044715;
    return elementwise(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
        [](double x, double) {
            const double u = c * (x + k * x * x * x);
            const double th = std::tanh(u);
            const double du = c * (1.0 + 3.0 * k * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
}

Var softplus(Var a) {
    return elementwise(
        a,
        [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

namespace {

// Shared backward for softmax-like rows: dx = y ⊙ (g - <g, y>).
void softmax_backward(const Matrix& y, const Matrix& g, Matrix& gx) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto yr = y.row(i);
        auto gr = g.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
        auto out = gx.row(i);
        for (std::size_t j = 0; j < yr.size(); ++j) out[j] += yr[j] * (gr[j] - dot);
    }
}

} // namespace

Var softmax_rows(Var a) {
    Tape& t = *a.tape;
    const auto ia = a.id;
    return t.push(softmax_rows(t.value(a)), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        softmax_backward(tp.value_of(self), tp.grad_of(self), tp.grad_ref(ia));
    });
}

Var masked_softmax_rows(Var logits, const Matrix& allowed, MaskMode mode) {
    Tape& t = *logits.tape;
    const Matrix& x = t.value(logits);
    check_same_shape(x, allowed, "masked_softmax_rows");
    const auto ia = logits.id;

    if (mode == MaskMode::hadamard_literal) {
        Matrix masked = x;
        for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= allowed[i];
        Matrix mask = allowed;
        return t.push(softmax_rows(masked), any_grad(logits), [ia, mask = std::move(mask)](Tape& tp, std::int32_t self) {
            const Matrix& y = tp.value_of(self);
            Matrix tmp(y.rows(), y.cols());
            softmax_backward(y, tp.grad_of(self), tmp);
            Matrix& gx = tp.grad_ref(ia);
            for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i] * mask[i];
        });
    }

    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < x.cols(); ++j)
            if (allowed(i, j) != 0.0) mx = std::max(mx, x(i, j));
        if (mx == -INFINITY) continue; // no allowed key: zero row
        double total = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (allowed(i, j) == 0.0) continue;
            out(i, j) = std::exp(x(i, j) - mx);
            total += out(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= total;
    }
    // Disallowed entries carry y = 0, so the ordinary softmax backward already
    // sends them zero gradient; fully masked rows have y ≡ 0 and contribute nothing.
    return t.push(std::move(out), any_grad(logits), [ia](Tape& tp, std::int32_t self) {
        softmax_backward(tp.value_of(self), tp.grad_of(self), tp.grad_ref(ia));
    });
}

Var logsumexp_rows(Var a) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    Matrix out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double total = 0.0;
        for (double v : r) total += std::exp(v - mx);
        out(i, 0) = mx + std::log(total);
    }
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        const Matrix& x = tp.value_of(ia);
        const Matrix& y = tp.value_of(self);
        const Matrix& g = tp.grad_of(self);
        Matrix& gx = tp.grad_ref(ia);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) += g(i, 0) * std::exp(x(i, j) - y(i, 0));
    });
}

Var masked_logsumexp_rows(Var a, const Matrix& allowed) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    check_same_shape(x, allowed, "masked_logsumexp_rows");
    Matrix out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < x.cols(); ++j)
            if (allowed(i, j) != 0.0) mx = std::max(mx, x(i, j));
        if (mx == -INFINITY) continue;
        double total = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j)
            if (allowed(i, j) != 0.0) total += std::exp(x(i, j) - mx);
        out(i, 0) = mx + std::log(total);
    }
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia, allowed](Tape& tp, std::int32_t self) {
        const Matrix& x = tp.value_of(ia);
        const Matrix& y = tp.value_of(self);
        const Matrix& g = tp.grad_of(self);
        Matrix& gx = tp.grad_ref(ia);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j)
                if (allowed(i, j) != 0.0) gx(i, j) += g(i, 0) * std::exp(x(i, j) - y(i, 0));
    });
}

Var layer_norm_rows(Var x, Var gain, Var bias) {
    constexpr double eps = 1e-5;
    Tape& t = *x.tape;
    const Matrix& xv = t.value(x);
    const Matrix& gv = t.value(gain);
    const Matrix& bv = t.value(bias);
    const std::size_t n = xv.rows(), d = xv.cols();
    if (gv.rows() != 1 || gv.cols() != d || !gv.same_shape(bv)) throw ShapeError("layer_norm gain/bias shape");

    Matrix normalized(n, d);
    Matrix inv_std(n, 1);
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = xv.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std(i, 0) = is;
        for (std::size_t j = 0; j < d; ++j) {
            normalized(i, j) = (r[j] - mean) * is;
            out(i, j) = normalized(i, j) * gv(0, j) + bv(0, j);
        }
    }
    const auto ix = x.id, ig = gain.id, ib = bias.id;
    const bool needs = any_grad(x) || any_grad(gain) || any_grad(bias);
    return t.push(std::move(out), needs,
                  [ix, ig, ib, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& tp,
                                                                                                   std::int32_t self) {
                      const Matrix& g = tp.grad_of(self);
                      const Matrix& gv = tp.value_of(ig);
                      const std::size_t n = g.rows(), d = g.cols();
                      if (tp.requires_grad(Var{&tp, ig}) || tp.requires_grad(Var{&tp, ib})) {
                          Matrix dg(1, d), db(1, d);
                          for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < d; ++j) {
                                  dg(0, j) += g(i, j) * normalized(i, j);
                                  db(0, j) += g(i, j);
                              }
                          if (tp.requires_grad(Var{&tp, ig})) tp.grad_ref(ig) += dg;
                          if (tp.requires_grad(Var{&tp, ib})) tp.grad_ref(ib) += db;
                      }
                      if (!tp.requires_grad(Var{&tp, ix})) return;
                      Matrix& gx = tp.grad_ref(ix);
                      for (std::size_t i = 0; i < n; ++i) {
                          double mean_dn = 0.0, mean_dn_n = 0.0;
                          for (std::size_t j = 0; j < d; ++j) {
                              const double dn = g(i, j) * gv(0, j);
                              mean_dn += dn;
                              mean_dn_n += dn * normalized(i, j);
                          }
                          mean_dn /= static_cast<double>(d);
                          mean_dn_n /= static_cast<double>(d);
                          for (std::size_t j = 0; j < d; ++j) {
                              const double dn = g(i, j) * gv(0, j);
                              gx(i, j) += inv_std(i, 0) * (dn - mean_dn - normalized(i, j) * mean_dn_n);
                          }
                      }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    if (begin > end || end > x.cols()) throw ShapeError("slice_cols out of range");
    Matrix out(x.rows(), end - begin);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = x(i, j);
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia, begin](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(i, begin + j) += g(i, j);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    Tape& t = *parts[0].tape;
    const std::size_t n = t.value(parts[0]).rows();
    std::size_t total = 0;
    bool needs = false;
    std::vector<std::int32_t> ids;
    for (Var p : parts) {
        if (t.value(p).rows() != n) throw ShapeError("concat_cols row mismatch");
        total += t.value(p).cols();
        needs = needs || any_grad(p);
        ids.push_back(p.id);
    }
    Matrix out(n, total);
    std::size_t off = 0;
    for (Var p : parts) {
        const Matrix& x = t.value(p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, off + j) = x(i, j);
        off += x.cols();
    }
    return t.push(std::move(out), needs, [ids = std::move(ids)](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        std::size_t off = 0;
        for (auto id : ids) {
            const std::size_t c = tp.value_of(id).cols();
            if (tp.requires_grad(Var{&tp, id})) {
                Matrix& gp = tp.grad_ref(id);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
            }
            off += c;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    Tape& t = *parts[0].tape;
    const std::size_t d = t.value(parts[0]).cols();
    std::size_t total = 0;
    bool needs = false;
    std::vector<std::int32_t> ids;
    for (Var p : parts) {
        if (t.value(p).cols() != d) throw ShapeError("concat_rows col mismatch");
        total += t.value(p).rows();
        needs = needs || any_grad(p);
        ids.push_back(p.id);
    }
    std::vector<double> data;
    data.reserve(total * d);
    for (Var p : parts) data.insert(data.end(), t.value(p).data().begin(), t.value(p).data().end());
    return t.push(Matrix(total, d, std::move(data)), needs, [ids = std::move(ids)](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        std::size_t off = 0;
        for (auto id : ids) {
            const std::size_t len = tp.value_of(id).size();
            if (tp.requires_grad(Var{&tp, id})) {
                Matrix& gp = tp.grad_ref(id);
                for (std::size_t k = 0; k < len; ++k) gp[k] += g[off + k];
            }
            off += len;
        }
    });
}

Var select_rows(Var a, std::span<const std::int32_t> rows) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    Matrix out(rows.size(), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= x.rows()) throw ShapeError("select_rows out of range");
        std::copy_n(x.row(static_cast<std::size_t>(rows[r])).begin(), x.cols(), out.row(r).begin());
    }
    std::vector<std::int32_t> idx(rows.begin(), rows.end());
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia, idx = std::move(idx)](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto dst = ga.row(static_cast<std::size_t>(idx[r]));
            auto src = g.row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    });
}

Var repeat_row(Var row, std::size_t n) {
    Tape& t = *row.tape;
    const Matrix& r = t.value(row);
    if (r.rows() != 1) throw ShapeError("repeat_row expects a single row");
    Matrix out(n, r.cols());
    for (std::size_t i = 0; i < n; ++i) std::copy_n(r.row(0).begin(), r.cols(), out.row(i).begin());
    const auto ir = row.id;
    return t.push(std::move(out), any_grad(row), [ir](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& gr = tp.grad_ref(ir);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    });
}

Var sum_all(Var a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : t.value(a).data()) s += v;
    const auto ia = a.id;
    return t.push(Matrix(1, 1, s), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        const double g = tp.grad_of(self)[0];
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var sum_rows(Var a) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    Matrix out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (double v : x.row(i)) out(i, 0) += v;
    const auto ia = a.id;
    return t.push(std::move(out), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
    });
}

Var mean_rows(Var a) {
    Tape& t = *a.tape;
    const auto ia = a.id;
    return t.push(mean_pool_rows(t.value(a)), any_grad(a), [ia](Tape& tp, std::int32_t self) {
        const Matrix& g = tp.grad_of(self);
        Matrix& ga = tp.grad_ref(ia);
        if (ga.rows() == 0) return;
        const double inv = 1.0 / static_cast<double>(ga.rows());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j) * inv;
    });
}

Var dot_const(Var a, const Matrix& g) {
    Tape& t = *a.tape;
    check_same_shape(t.value(a), g, "dot_const");
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += t.value(a)[i] * g[i];
    const auto ia = a.id;
    return t.push(Matrix(1, 1, s), any_grad(a), [ia, g](Tape& tp, std::int32_t self) {
        const double up = tp.grad_of(self)[0];
        Matrix& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up * g[i];
    });
}

Var pick(Var a, std::size_t r, std::size_t c) {
    Tape& t = *a.tape;
    const Matrix& x = t.value(a);
    if (r >= x.rows() || c >= x.cols()) throw ShapeError("pick out of range");
    const auto ia = a.id;
    return t.push(Matrix(1, 1, x(r, c)), any_grad(a), [ia, r, c](Tape& tp, std::int32_t self) {
        tp.grad_ref(ia)(r, c) += tp.grad_of(self)[0];
    });
}

} // namespace unisar
