#include "manid/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "manid/errors.hpp"

namespace manid {

NeighborIndex::NeighborIndex(const Matrix& points) : n_(points.rows()), dist_(n_ * n_, 0.0) {
    const std::size_t d = points.cols();
    for (std::size_t i = 0; i < n_; ++i) {
        const double* a = points.row(i).data();
        for (std::size_t j = i + 1; j < n_; ++j) {
            const double* b = points.row(j).data();
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double t = a[c] - b[c];
                s += t * t;
            }
            dist_[i * n_ + j] = dist_[j * n_ + i] = std::sqrt(s);
        }
    }
}

std::vector<std::size_t> NeighborIndex::knn(std::size_t i, std::size_t k) const {
    if (i >= n_) throw DimensionError("knn: point index out of range");
    if (k >= n_) throw DimensionError("knn: need more than k points");
    std::vector<std::size_t> idx;
    idx.reserve(n_ - 1);
    for (std::size_t j = 0; j < n_; ++j)
        if (j != i) idx.push_back(j);
    const double* row = dist_.data() + i * n_;
    auto closer = [row](std::size_t a, std::size_t b) {
        return row[a] < row[b] || (row[a] == row[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
    idx.resize(k);
    return idx;
}

std::vector<double> NeighborIndex::knn_distances(std::size_t i, std::size_t k) const {
    std::vector<double> d;
    for (std::size_t j : knn(i, k)) d.push_back(distance(i, j));
    return d;
}

std::vector<double> NeighborIndex::pair_distances() const {
    std::vector<double> d;
    d.reserve(n_ * (n_ - 1) / 2);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j) d.push_back(dist_[i * n_ + j]);
    return d;
}

double id_lpca(const Matrix& points, std::size_t k, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("lPCA variance threshold must lie in (0, 1)");
    if (k == 0) throw ConfigError("lPCA neighbourhood size must be positive");
    if (points.rows() < k + 1) throw DimensionError("lPCA needs at least k + 1 points");
    const NeighborIndex index(points);
    const std::size_t d = points.cols();
    double total_id = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::vector<std::size_t> hood = index.knn(i, k);
        hood.push_back(i);
        const std::size_t m = hood.size();
        Matrix centered(m, d);
        std::vector<double> mean(d, 0.0);
        for (std::size_t r : hood)
            for (std::size_t c = 0; c < d; ++c) mean[c] += points(r, c);
        for (double& v : mean) v /= static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < d; ++c) centered(r, c) = points(hood[r], c) - mean[c];
        // The small Gram matrix shares its nonzero spectrum with the covariance.
        const Spectrum s = sym_eigvals(d <= m ? gram_cols(centered) : gram_rows(centered));
        double total = 0.0;
        for (double v : s.values) total += std::max(v, 0.0);
        std::size_t count = 0;
        double acc = 0.0;
        if (total > 0.0) {
            while (count < s.dim() && acc < theta * total) acc += std::max(s[count++], 0.0);
        }
        total_id += static_cast<double>(count);
    }
    return total_id / static_cast<double>(points.rows());
}

double id_mle(const Matrix& points, std::size_t k1, std::size_t k2, std::size_t* dropped) {
    if (k1 < 2 || k1 > k2) throw ConfigError("MLE needs 2 <= k1 <= k2");
    // Drop exact duplicates: they would give zero neighbour distances.
    std::vector<std::size_t> order(points.rows());
    std::iota(order.begin(), order.end(), 0);
    auto row_less = [&](std::size_t a, std::size_t b) {
        const auto ra = points.row(a), rb = points.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), row_less);
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < order.size(); ++t) {
        if (t > 0) {
            const auto a = points.row(order[t - 1]), b = points.row(order[t]);
            if (std::equal(a.begin(), a.end(), b.begin())) continue;
        }
        keep.push_back(order[t]);
    }
    std::sort(keep.begin(), keep.end());
    if (dropped) *dropped = points.rows() - keep.size();
    if (keep.size() <= k2) throw DimensionError("MLE needs more than k2 distinct points");
    Matrix unique(keep.size(), points.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        const auto src = points.row(keep[r]);
        std::copy(src.begin(), src.end(), unique.row(r).begin());
    }

    const NeighborIndex index(unique);
    const std::size_t n = unique.rows();
    double sum_over_k = 0.0;
    std::vector<std::vector<double>> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = index.knn_distances(i, k2);
        logs[i].resize(k2);
        for (std::size_t j = 0; j < k2; ++j) logs[i][j] = std::log(t[j]);
    }
    for (std::size_t k = k1; k <= k2; ++k) {
        double sum_over_points = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j + 1 < k; ++j) s += logs[i][k - 1] - logs[i][j];
            sum_over_points += static_cast<double>(k - 1) / s;
        }
        sum_over_k += sum_over_points / static_cast<double>(n);
    }
    return sum_over_k / static_cast<double>(k2 - k1 + 1);
}

std::vector<double> default_radius_grid(const NeighborIndex& index, std::size_t count,
                                        double lo_quantile, double hi_quantile) {
    if (count < 2) throw ConfigError("radius grid needs at least two radii");
    if (!(lo_quantile > 0.0 && lo_quantile < hi_quantile && hi_quantile < 1.0))
        throw ConfigError("radius grid quantiles must satisfy 0 < lo < hi < 1");
    std::vector<double> d = index.pair_distances();
    if (d.empty()) throw DimensionError("radius grid needs at least two points");
    std::sort(d.begin(), d.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(d.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, d.size() - 1);
        return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
    };
    const double r0 = quantile(lo_quantile), r1 = quantile(hi_quantile);
    if (!(r0 > 0.0 && r1 > r0)) return {};
    std::vector<double> radii(count);
    const double l0 = std::log(r0), l1 = std::log(r1);
    for (std::size_t i = 0; i < count; ++i)
        radii[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(count - 1));
    return radii;
}

CorrDimResult id_corrdim(const Matrix& points, const std::optional<std::vector<double>>& radii) {
    if (points.rows() < 2) throw DimensionError("correlation dimension needs at least two points");
    const NeighborIndex index(points);
    CorrDimResult res;
    res.radii = radii ? *radii : default_radius_grid(index);
    std::vector<double> d = index.pair_distances();
    std::sort(d.begin(), d.end());
    const double pairs = static_cast<double>(d.size());
    std::vector<double> lx, ly;
    for (double r : res.radii) {
        // Heaviside H(r - |x_a - x_b|) counts pairs at distance <= r.
        const auto it = std::upper_bound(d.begin(), d.end(), r);
        const double rho = static_cast<double>(it - d.begin()) / pairs;
        res.density.push_back(rho);
        if (r > 0.0 && rho > 0.0 && rho < 1.0) {
            lx.push_back(std::log(r));
            ly.push_back(std::log(rho));
        }
    }
    if (lx.size() < 2) {
        res.degenerate = true;
        return res;
    }
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        res.degenerate = true;
        return res;
    }
    res.dimension = sxy / sxx;
    return res;
}

}  // namespace manid
