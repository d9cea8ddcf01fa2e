#include "unisar/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace unisar {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("cannot add " + other.shape_string() + " to " + shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb || out.rows() != m || out.cols() != n) {
        throw ShapeError("gemm shape mismatch: " + a.shape_string() + (trans_a ? "^T" : "") +
                         " * " + b.shape_string() + (trans_b ? "^T" : "") + " -> " +
                         out.shape_string());
    }
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    const std::size_t lda = a.cols();
    const std::size_t ldb = b.cols();

    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* orow = po + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * lda + p];
                if (av == 0.0) continue;
                const double* brow = pb + p * ldb;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * lda;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = pb + j * ldb;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                po[i * n + j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = pa + p * lda;
            const double* brow = pb + p * ldb;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* orow = po + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += pa[p * lda + i] * pb[j * ldb + p];
                po[i * n + j] += acc;
            }
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    gemm(a, false, b, false, out);
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto in = m.row(i);
        auto o = out.row(i);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (double& v : o) v /= total;
    }
    return out;
}

Matrix mean_pool_rows(const Matrix& m) {
    Matrix out(1, m.cols());
    if (m.rows() == 0) return out;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
    out *= 1.0 / static_cast<double>(m.rows());
    return out;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace unisar
