#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "manid/errors.hpp"
#include "manid/linalg.hpp"

namespace manid {

namespace {

constexpr double kOffDiagonalTolerance = 1e-12;
constexpr int kMaxSweeps = 100;

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& s, bool want_vectors) {
    if (s.rows() != s.cols()) throw DimensionError("sym_eig: matrix is not square");
    const std::size_t n = s.rows();
    Matrix a = symmetrized(s);
    Matrix v = want_vectors ? Matrix::identity(n) : Matrix();

    EigenDecomposition out;
    const double norm = a.frobenius_norm();
    if (norm > 0.0) {
        for (; out.sweeps < kMaxSweeps; ++out.sweeps) {
            if (off_diagonal_norm(a) <= kOffDiagonalTolerance * norm) break;
            for (std::size_t p = 0; p + 1 < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = a(p, q);
                    if (apq == 0.0) continue;
                    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                    const double t = std::copysign(1.0, theta) /
                                     (std::abs(theta) + std::hypot(theta, 1.0));
                    const double c = 1.0 / std::sqrt(t * t + 1.0);
                    const double sn = t * c;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double akp = a(k, p), akq = a(k, q);
                        a(k, p) = c * akp - sn * akq;
                        a(k, q) = sn * akp + c * akq;
                    }
                    for (std::size_t k = 0; k < n; ++k) {
                        const double apk = a(p, k), aqk = a(q, k);
                        a(p, k) = c * apk - sn * aqk;
                        a(q, k) = sn * apk + c * aqk;
                    }
                    a(p, q) = a(q, p) = 0.0;
                    if (want_vectors) {
                        for (std::size_t k = 0; k < n; ++k) {
                            const double vkp = v(k, p), vkq = v(k, q);
                            v(k, p) = c * vkp - sn * vkq;
                            v(k, q) = sn * vkp + c * vkq;
                        }
                    }
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    out.spectrum.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.spectrum.values[i] = a(order[i], order[i]);
    if (want_vectors) {
        out.vectors = Matrix(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
    }
    return out;
}

Spectrum sym_eigvals(const Matrix& s) { return sym_eig(s, false).spectrum; }

namespace {

// Eigenvalues of a Gram matrix carry absolute roundoff of about n * eps *
// lambda_max, so singular values below sqrt of that level are not resolvable
// through the Gram route regardless of the requested tolerance.
double gram_cutoff(double lambda_max, double tol, std::size_t n) {
    const double roundoff = static_cast<double>(std::max<std::size_t>(n, 1)) *
                            std::numeric_limits<double>::epsilon();
    return lambda_max * std::max(tol * tol, roundoff);
}

}  // namespace

Matrix pseudoinverse(const Matrix& a, std::optional<double> tol) {
    const double rel = tol.value_or(1e-10);
    if (rel <= 0.0) throw ConfigError("pseudoinverse: tol must be positive");
    const std::size_t m = a.rows(), n = a.cols();
    Matrix result(n, m);
    if (m == 0 || n == 0) return result;

    const bool tall = n <= m;
    const Matrix gram = tall ? gram_cols(a) : gram_rows(a);
    const EigenDecomposition eig = sym_eig(gram, true);
    const double lambda_max = std::max(eig.spectrum.values.front(), 0.0);
    if (lambda_max == 0.0) return result;
    const double cutoff = gram_cutoff(lambda_max, rel, gram.rows());

    // G^+ = V diag(1/lambda) V^T over the retained eigenpairs.
    const std::size_t k = gram.rows();
    Matrix ginv(k, k);
    for (std::size_t e = 0; e < k; ++e) {
        const double lam = eig.spectrum.values[e];
        if (lam <= cutoff) continue;
        for (std::size_t i = 0; i < k; ++i) {
            const double vi = eig.vectors(i, e) / lam;
            for (std::size_t j = 0; j < k; ++j) ginv(i, j) += vi * eig.vectors(j, e);
        }
    }
    // tall: A^+ = (A^T A)^+ A^T ; wide: A^+ = A^T (A A^T)^+
    return tall ? matmul_nt(ginv, a) : matmul_tn(a, ginv);
}

std::size_t numerical_rank(const Matrix& a, double tol) {
    if (a.empty()) return 0;
    const Matrix gram = a.cols() <= a.rows() ? gram_cols(a) : gram_rows(a);
    const Spectrum sp = sym_eigvals(gram);
    const double lambda_max = std::max(sp.values.front(), 0.0);
    if (lambda_max == 0.0) return 0;
    const double cutoff = gram_cutoff(lambda_max, tol, gram.rows());
    return static_cast<std::size_t>(
        std::count_if(sp.values.begin(), sp.values.end(), [&](double v) { return v > cutoff; }));
}

}  // namespace manid
