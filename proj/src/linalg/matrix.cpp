#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "manid/errors.hpp"
#include "manid/kernels.hpp"
#include "manid/linalg.hpp"

namespace manid {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::trace() const {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
    return s;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw DimensionError("row block out of range");
    return Matrix(count, cols_,
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                                      data_.begin() +
                                          static_cast<std::ptrdiff_t>((first + count) * cols_)));
}

Spectrum::Spectrum(std::vector<double> v) : values(std::move(v)) {
    std::sort(values.begin(), values.end(), std::greater<>());
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.values()) v *= s;
    return c;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    kernels::active().gemm_nn(a.rows(), b.cols(), a.cols(), {a.data(), a.cols(), 1}, b.data(),
                              b.cols(), c.data(), c.cols(), false);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    kernels::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(), b.data(),
                              b.cols(), c.data(), c.cols(), false);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("matmul_tn: inner dimensions differ");
    Matrix c(a.cols(), b.cols());
    kernels::active().gemm_nn(a.cols(), b.cols(), a.rows(), {a.data(), 1, a.cols()}, b.data(),
                              b.cols(), c.data(), c.cols(), false);
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw DimensionError("matvec: dimension mismatch");
    std::vector<double> y(a.rows());
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = k.dot(a.row(i).data(), x.data(), x.size());
    return y;
}

Matrix symmetrized(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("symmetrized: matrix is not square");
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

Matrix gram_rows(const Matrix& j) { return symmetrized(matmul_nt(j, j)); }

Matrix gram_cols(const Matrix& j) { return symmetrized(matmul_tn(j, j)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace manid
