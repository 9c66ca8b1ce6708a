#pragma once

// Dense arithmetic kernels used by every network and metric computation.
//
// Each kernel has a portable scalar reference implementation and an AVX2+FMA
// variant. The variant is picked once at startup from CPUID; setting the
// environment variable MANID_ISA=scalar forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace manid::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Strided view of the left operand of a product: element (i, k) lives at
/// data[i * row_stride + k * col_stride]. Lets one kernel serve A and A^T.
struct StridedOperand {
    const double* data;
    std::size_t row_stride;
    std::size_t col_stride;
};

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // C[m x n] (+)= A[m x k] * B[k x n], B and C row-major.
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, StridedOperand a,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc,
                    bool accumulate);
    // C[m x n] (+)= A[m x k] * B[n x k]^T, all row-major.
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    std::size_t lda, const double* b, std::size_t ldb, double* c,
                    std::size_t ldc, bool accumulate);
};

/// Table for a specific ISA. Requesting avx2 on a machine without it returns
/// the scalar table.
const KernelTable& table(Isa isa);

/// ISA detected for this process (honours MANID_ISA).
Isa active_isa();

bool cpu_supports(Isa isa);

/// Table selected for this process.
const KernelTable& active();

// Convenience wrappers over the active table.

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, StridedOperand a, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, StridedOperand a, const double* b,
             std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
}  // namespace avx2

}  // namespace manid::kernels
