#pragma once

// Classical intrinsic-dimension estimators: local PCA, the Levina-Bickel
// maximum-likelihood estimator and the Grassberger-Procaccia correlation
// dimension. Neighbour search is exact brute force.

#include <cstddef>
#include <optional>
#include <vector>

#include "manid/linalg.hpp"

namespace manid {

/// All pairwise Euclidean distances of a point set (rows), kept in full.
class NeighborIndex {
public:
    explicit NeighborIndex(const Matrix& points);

    std::size_t size() const { return n_; }
    double distance(std::size_t i, std::size_t j) const { return dist_[i * n_ + j]; }

    /// The k nearest other points of i, nearest first. Ties break by index.
    std::vector<std::size_t> knn(std::size_t i, std::size_t k) const;
    std::vector<double> knn_distances(std::size_t i, std::size_t k) const;

    /// Distances d(i, j) for i < j, unsorted.
    std::vector<double> pair_distances() const;

private:
    std::size_t n_ = 0;
    std::vector<double> dist_;
};

/// Mean over points of the number of leading local-covariance eigenvalues
/// needed to reach `theta` of the total variance. Each neighbourhood holds
/// the point and its k nearest neighbours.
double id_lpca(const Matrix& points, std::size_t k = 40, double theta = 0.95);

/// Levina-Bickel estimate averaged over points and over k in [k1, k2].
/// Exact duplicate rows are dropped first; their count goes to `dropped`.
double id_mle(const Matrix& points, std::size_t k1 = 10, std::size_t k2 = 20,
              std::size_t* dropped = nullptr);

struct CorrDimResult {
    double dimension = 0.0;
    bool degenerate = false;      // fewer than two usable radii, or a flat curve
    std::vector<double> radii;
    std::vector<double> density;  // fraction of pairs closer than each radius
};

/// `count` log-spaced radii between two quantiles of the pairwise distances.
std::vector<double> default_radius_grid(const NeighborIndex& index, std::size_t count = 16,
                                        double lo_quantile = 0.01, double hi_quantile = 0.25);

/// Least-squares slope of log density against log r over radii with
/// 0 < density < 1.
CorrDimResult id_corrdim(const Matrix& points,
                         const std::optional<std::vector<double>>& radii = std::nullopt);

}  // namespace manid
