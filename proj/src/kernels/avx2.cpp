// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma;
// nothing here may be called unless cpu_supports(Isa::avx2) is true.

#include "manid/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>

namespace manid::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

constexpr std::size_t kDepthBlock = 256;

// R rows of A (R <= 4) times a panel of W = 4 * NV columns of B.
template <int R, int NV>
inline void micro_nn(std::size_t kc, const double* a, std::size_t ars, std::size_t acs,
                     const double* b, std::size_t ldb, double* c, std::size_t ldc, bool load) {
    __m256d acc[R][NV];
    for (int r = 0; r < R; ++r)
        for (int v = 0; v < NV; ++v)
            acc[r][v] = load ? _mm256_loadu_pd(c + r * ldc + 4 * v) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < kc; ++p) {
        __m256d bv[NV];
        for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(b + p * ldb + 4 * v);
        for (int r = 0; r < R; ++r) {
            const __m256d av = _mm256_broadcast_sd(a + r * ars + p * acs);
            for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
        }
    }
    for (int r = 0; r < R; ++r)
        for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + r * ldc + 4 * v, acc[r][v]);
}

template <int NV>
inline void rows_nn(std::size_t m, std::size_t kc, const double* a, std::size_t ars,
                    std::size_t acs, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                    bool load) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
        micro_nn<4, NV>(kc, a + i * ars, ars, acs, b, ldb, c + i * ldc, ldc, load);
    switch (m - i) {
        case 3: micro_nn<3, NV>(kc, a + i * ars, ars, acs, b, ldb, c + i * ldc, ldc, load); break;
        case 2: micro_nn<2, NV>(kc, a + i * ars, ars, acs, b, ldb, c + i * ldc, ldc, load); break;
        case 1: micro_nn<1, NV>(kc, a + i * ars, ars, acs, b, ldb, c + i * ldc, ldc, load); break;
        default: break;
    }
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
    }
    for (; i + 4 <= n; i += 4)
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, StridedOperand a, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate)
            for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
        return;
    }
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
        const std::size_t kc = std::min(kDepthBlock, k - p0);
        const bool load = accumulate || p0 > 0;
        const double* ap = a.data + p0 * a.col_stride;
        const double* bp = b + p0 * ldb;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8)
            rows_nn<2>(m, kc, ap, a.row_stride, a.col_stride, bp + j, ldb, c + j, ldc, load);
        for (; j + 4 <= n; j += 4)
            rows_nn<1>(m, kc, ap, a.row_stride, a.col_stride, bp + j, ldb, c + j, ldc, load);
        for (; j < n; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                double s = load ? c[i * ldc + j] : 0.0;
                for (std::size_t p = 0; p < kc; ++p)
                    s += ap[i * a.row_stride + p * a.col_stride] * bp[p * ldb + j];
                c[i * ldc + j] = s;
            }
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    const std::size_t k4 = k & ~std::size_t{3};
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * lda;
        const double* a1 = a0 + lda;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* bj[4] = {b + j * ldb, b + (j + 1) * ldb, b + (j + 2) * ldb,
                                   b + (j + 3) * ldb};
            __m256d acc0[4], acc1[4];
            for (int q = 0; q < 4; ++q) acc0[q] = acc1[q] = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k4; p += 4) {
                const __m256d x0 = _mm256_loadu_pd(a0 + p);
                const __m256d x1 = _mm256_loadu_pd(a1 + p);
                for (int q = 0; q < 4; ++q) {
                    const __m256d y = _mm256_loadu_pd(bj[q] + p);
                    acc0[q] = _mm256_fmadd_pd(x0, y, acc0[q]);
                    acc1[q] = _mm256_fmadd_pd(x1, y, acc1[q]);
                }
            }
            for (int q = 0; q < 4; ++q) {
                double s0 = hsum(acc0[q]), s1 = hsum(acc1[q]);
                for (std::size_t p = k4; p < k; ++p) {
                    s0 += a0[p] * bj[q][p];
                    s1 += a1[p] * bj[q][p];
                }
                double* c0 = c + i * ldc + j + q;
                double* c1 = c0 + ldc;
                *c0 = accumulate ? *c0 + s0 : s0;
                *c1 = accumulate ? *c1 + s1 : s1;
            }
        }
        for (; j < n; ++j) {
            const double s0 = dot(a0, b + j * ldb, k), s1 = dot(a1, b + j * ldb, k);
            double* c0 = c + i * ldc + j;
            double* c1 = c0 + ldc;
            *c0 = accumulate ? *c0 + s0 : s0;
            *c1 = accumulate ? *c1 + s1 : s1;
        }
    }
    for (; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double s = dot(a + i * lda, b + j * ldb, k);
            c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
        }
    }
}

}  // namespace manid::kernels::avx2

#else

// Build without AVX2 support: alias the reference kernels so the table stays valid.
namespace manid::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, StridedOperand a, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    scalar::gemm_nn(m, n, k, a, b, ldb, c, ldc, accumulate);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    scalar::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
}  // namespace manid::kernels::avx2

#endif
