#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisar {

/// Dense row-major matrix of doubles. Vectors are 1 x n matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix row_vector(std::span<const double> values);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_string() const;

    void fill(double v);
    Matrix& operator+=(const Matrix& other);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Plain kernels used by the tape ops and by tests.
// gemm computes out += op(a) * op(b) where op transposes when the flag is set.
void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

/// Row-wise softmax with max subtraction; an empty matrix yields an empty matrix.
Matrix softmax_rows(const Matrix& m);

/// Arithmetic mean of the rows as a 1 x cols vector; zero rows give the zero vector.
Matrix mean_pool_rows(const Matrix& m);

bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

} // namespace unisar
