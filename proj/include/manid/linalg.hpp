#pragma once

// Minimal dense linear algebra: a row-major double matrix, symmetric
// eigendecomposition by cyclic Jacobi rotations, and a Gram-based
// Moore-Penrose pseudoinverse.

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace manid {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    Matrix transposed() const;
    double frobenius_norm() const;
    double trace() const;
    bool all_finite() const;

    /// Copy of rows [first, first + count).
    Matrix row_block(std::size_t first, std::size_t count) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Eigenvalues sorted in descending order.
struct Spectrum {
    std::vector<double> values;

    Spectrum() = default;
    /// Sorts the given values descending.
    explicit Spectrum(std::vector<double> v);

    std::size_t dim() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
};

struct EigenDecomposition {
    Spectrum spectrum;
    /// Column i is the unit eigenvector for spectrum.values[i]. Empty when
    /// vectors were not requested.
    Matrix vectors;
    int sweeps = 0;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

/// (A + A^T) / 2
Matrix symmetrized(const Matrix& a);
/// J J^T
Matrix gram_rows(const Matrix& j);
/// J^T J
Matrix gram_cols(const Matrix& j);

double max_abs_diff(const Matrix& a, const Matrix& b);

/// Eigendecomposition of the symmetric part of `s`. Cyclic Jacobi sweeps
/// until the off-diagonal Frobenius norm drops below 1e-12 * ||S||_F, at
/// most 100 sweeps. Throws DimensionError for non-square input.
EigenDecomposition sym_eig(const Matrix& s, bool want_vectors = true);
Spectrum sym_eigvals(const Matrix& s);

/// Moore-Penrose pseudoinverse. Singular values below tol * sigma_max are
/// treated as zero. The default tol is 1e-10.
Matrix pseudoinverse(const Matrix& a, std::optional<double> tol = std::nullopt);

/// Numerical rank: count of singular values above tol * sigma_max.
std::size_t numerical_rank(const Matrix& a, double tol);

}  // namespace manid
