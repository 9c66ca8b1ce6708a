#include <doctest.h>

#include <cstdlib>
#include <vector>

#include "manid/kernels.hpp"
#include "support.hpp"

using namespace manid;
namespace k = manid::kernels;

namespace {

std::vector<double> naive_gemm(std::size_t m, std::size_t n, std::size_t kk, const std::vector<double>& a,
                               bool a_transposed, const std::vector<double>& b) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0;
            for (std::size_t p = 0; p < kk; ++p) s += (a_transposed ? a[p * m + i] : a[i * kk + p]) * b[p * n + j];
            c[i * n + j] = static_cast<double>(s);
        }
    return c;
}

void check_close(const std::vector<double>& x, const std::vector<double>& y, double tol) {
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(testing::close(x[i], y[i], tol));
}

}  // namespace

TEST_CASE("isa selection honours the environment override") {
    const char* env = std::getenv("MANID_ISA");
    if (env && std::string(env) == "scalar") CHECK(k::active_isa() == k::Isa::scalar);
    if (!k::cpu_supports(k::Isa::avx2)) CHECK(k::active_isa() == k::Isa::scalar);
    CHECK(k::isa_name(k::Isa::scalar) == "scalar");
}

TEST_CASE("dot and axpy agree across variants for every tail length") {
    Rng rng(1);
    for (std::size_t n = 0; n <= 37; ++n) {
        const auto a = testing::random_vector(n, rng), b = testing::random_vector(n, rng);
        double ref = 0;
        for (std::size_t i = 0; i < n; ++i) ref += a[i] * b[i];
        CHECK(testing::close(k::scalar::dot(a.data(), b.data(), n), ref, 1e-13));
        CHECK(testing::close(k::avx2::dot(a.data(), b.data(), n), ref, 1e-13));
        CHECK(testing::close(k::table(k::Isa::avx2).dot(a.data(), b.data(), n), ref, 1e-13));

        auto y1 = testing::random_vector(n, rng);
        auto y2 = y1;
        k::scalar::axpy(0.7, a.data(), y1.data(), n);
        k::table(k::Isa::avx2).axpy(0.7, a.data(), y2.data(), n);
        check_close(y1, y2, 1e-15);
    }
}

TEST_CASE("gemm variants match a long-double reference, plain and transposed A") {
    Rng rng(2);
    const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {13, 9, 11}, {17, 33, 5}, {64, 40, 70}};
    for (const auto& sh : shapes) {
        const std::size_t m = sh[0], n = sh[1], kk = sh[2];
        const auto a = testing::random_vector(m * kk, rng), at = testing::random_vector(kk * m, rng);
        const auto b = testing::random_vector(kk * n, rng);
        for (const k::KernelTable* t : {&k::table(k::Isa::scalar), &k::table(k::Isa::avx2)}) {
            std::vector<double> c(m * n, 0.0);
            t->gemm_nn(m, n, kk, {a.data(), kk, 1}, b.data(), n, c.data(), n, false);
            check_close(c, naive_gemm(m, n, kk, a, false, b), 1e-12);

            std::vector<double> ct(m * n, 0.0);
            t->gemm_nn(m, n, kk, {at.data(), 1, m}, b.data(), n, ct.data(), n, false);
            check_close(ct, naive_gemm(m, n, kk, at, true, b), 1e-12);

            // accumulate adds onto the existing contents
            std::vector<double> acc(m * n, 1.0);
            t->gemm_nn(m, n, kk, {a.data(), kk, 1}, b.data(), n, acc.data(), n, true);
            auto expect = naive_gemm(m, n, kk, a, false, b);
            for (double& v : expect) v += 1.0;
            check_close(acc, expect, 1e-12);

            // gemm_nt with B^T stored row-major: bt[j * kk + p] = b[p * n + j]
            std::vector<double> bt(n * kk);
            for (std::size_t p = 0; p < kk; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];
            std::vector<double> cn(m * n, 0.0);
            t->gemm_nt(m, n, kk, a.data(), kk, bt.data(), kk, cn.data(), n, false);
            check_close(cn, naive_gemm(m, n, kk, a, false, b), 1e-12);
        }
    }
}

TEST_CASE("scalar and avx2 products agree elementwise on large random operands") {
    Rng rng(3);
    const std::size_t m = 50, n = 129, kk = 77;
    const auto a = testing::random_vector(m * kk, rng), b = testing::random_vector(kk * n, rng);
    std::vector<double> c1(m * n), c2(m * n);
    k::scalar::gemm_nn(m, n, kk, {a.data(), kk, 1}, b.data(), n, c1.data(), n, false);
    k::table(k::Isa::avx2).gemm_nn(m, n, kk, {a.data(), kk, 1}, b.data(), n, c2.data(), n, false);
    check_close(c1, c2, 1e-12);
}
