#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "manid/linalg.hpp"
#include "manid/rng.hpp"

namespace testing {

inline manid::Matrix random_matrix(std::size_t r, std::size_t c, manid::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    manid::Matrix m(r, c);
    for (double& v : m.values()) v = g(rng);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, manid::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

inline manid::Matrix random_symmetric(std::size_t n, manid::Rng& rng) {
    const manid::Matrix a = random_matrix(n, n, rng);
    return manid::symmetrized(a);
}

/// Central differences of f at x, out x in.
inline manid::Matrix fd_jacobian(const std::function<std::vector<double>(std::span<const double>)>& f,
                                 std::span<const double> x, double h = 1e-5) {
    std::vector<double> p(x.begin(), x.end());
    const std::size_t out = f(p).size();
    manid::Matrix j(out, x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double x0 = p[k];
        p[k] = x0 + h;
        const auto fp = f(p);
        p[k] = x0 - h;
        const auto fm = f(p);
        p[k] = x0;
        for (std::size_t i = 0; i < out; ++i) j(i, k) = (fp[i] - fm[i]) / (2 * h);
    }
    return j;
}

/// |a - b| <= tol * max(1, |b|)
inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

inline double rel_frobenius(const manid::Matrix& a, const manid::Matrix& b) {
    const double nb = b.frobenius_norm();
    return (a - b).frobenius_norm() / (nb > 0 ? nb : 1.0);
}

}  // namespace testing
