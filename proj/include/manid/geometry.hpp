#pragma once

// Pullback metrics of network maps and the eigen-gap intrinsic-dimension
// estimator built on them.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manid/linalg.hpp"
#include "manid/nn.hpp"
#include "manid/vae.hpp"

namespace manid {

/// Closed-form map given by its Jacobian at a point (out x in).
using JacobianFn = std::function<Matrix(std::span<const double>)>;

/// J^T h J, symmetrised. h defaults to the identity on the output space.
Matrix pullback_metric(const Matrix& jacobian, const std::optional<Matrix>& h = std::nullopt);
Matrix pullback_metric(const MlpNet& net, std::span<const double> x,
                       const std::optional<Matrix>& h = std::nullopt);
Matrix pullback_metric(const JacobianFn& jac, std::span<const double> x,
                       const std::optional<Matrix>& h = std::nullopt);

/// Jacobian of the encoder mean head, m x D.
Matrix encoder_mean_jacobian(const VaeModel& model, std::span<const double> x);
/// J_E J_E^T at x (m x m).
Matrix encoder_gram(const VaeModel& model, std::span<const double> x);
/// J_D^T J_D at the latent point z (m x m).
Matrix decoder_metric(const VaeModel& model, std::span<const double> z);

struct MetricReport {
    std::vector<double> point;
    Matrix metric;
    Spectrum spectrum;
};

MetricReport metric_report(std::span<const double> point, Matrix metric);

struct DualityReport {
    double max_error = 0.0;
    bool encoder_full_row_rank = true;
    std::size_t encoder_rank = 0;
};

/// Compares J_D^T J_D against (J_E J_E^T)^+ entrywise. Rank deficiency of
/// J_E at `tol` is reported, never thrown.
DualityReport duality_check(const Matrix& decoder_jacobian, const Matrix& encoder_jacobian,
                            double tol = 1e-10);

struct IdEstimate {
    std::size_t id = 0;
    Spectrum mean_spectrum;
    std::size_t gap_index = 0;  // 1-based position of the last eigenvalue before the gap
    double gap_ratio = 0.0;
    bool no_gap = false;
    std::vector<std::size_t> per_sample_ids;
    std::vector<Spectrum> spectra;
};

struct IdConfig {
    double rho = 1e3;            // minimal ratio lambda_{i-1} / lambda_i
    double floor = 1e-6;         // null eigenvalues sit below floor * lambda_1
    std::size_t sample_size = 500;
    std::uint64_t seed = 1;
    void validate() const;
};

enum class MetricSide { encoder_gram, decoder_pullback };

std::string to_string(MetricSide s);
MetricSide metric_side_from_string(const std::string& s);

/// Mean-spectrum gap rule. Negative eigenvalues count as null.
IdEstimate estimate_id(const std::vector<Spectrum>& spectra, double rho = 1e3, double floor = 1e-6);

/// Gap rule applied to a single spectrum; returns the dimension on no-gap.
std::size_t spectrum_id(const Spectrum& s, double rho, double floor, bool* no_gap = nullptr);

/// Runs the estimator over a seeded subsample of `samples` (rows). The
/// decoder side evaluates J_D^T J_D at the encoded mean of each sample.
IdEstimate dataset_id(const VaeModel& model, const Matrix& samples, const IdConfig& cfg,
                      MetricSide side = MetricSide::encoder_gram);

/// Row indices used by dataset_id for a given size and seed.
std::vector<std::size_t> subsample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

/// sample_index,lambda_1..lambda_m per sample, then a "mean" row.
std::string spectrum_csv(const IdEstimate& est);
/// key=value lines (id, gap_index, gap_ratio, no_gap, mean spectrum).
std::string id_report(const IdEstimate& est);

}  // namespace manid
