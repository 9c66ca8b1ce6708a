#include <cstdlib>
#include <string>

#include "manid/kernels.hpp"

namespace manid::kernels {

namespace {

constexpr KernelTable kScalar{&scalar::dot, &scalar::axpy, &scalar::gemm_nn, &scalar::gemm_nt};
constexpr KernelTable kAvx2{&avx2::dot, &avx2::axpy, &avx2::gemm_nn, &avx2::gemm_nt};

Isa detect() {
    if (const char* env = std::getenv("MANID_ISA"); env != nullptr && std::string(env) == "scalar")
        return Isa::scalar;
    return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool cpu_supports(Isa isa) {
    if (isa == Isa::scalar) return true;
#if defined(MANID_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& table(Isa isa) {
    return (isa == Isa::avx2 && cpu_supports(Isa::avx2)) ? kAvx2 : kScalar;
}

Isa active_isa() {
    static const Isa isa = detect();
    return isa;
}

const KernelTable& active() {
    static const KernelTable& t = table(active_isa());
    return t;
}

}  // namespace manid::kernels
