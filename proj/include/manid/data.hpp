#pragma once

// Synthetic datasets with known intrinsic dimension: circle, paraboloid and
// a small circles-and-line phantom ("COULE-mini"), plus a parallel-beam
// Radon transform for sinograms.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manid/container.hpp"
#include "manid/linalg.hpp"
#include "manid/rng.hpp"

namespace manid {

enum class NormalizationMode { none, global, per_feature };

std::string to_string(NormalizationMode m);
NormalizationMode normalization_mode_from_string(const std::string& s);

/// x_normalized = (x - offset) / scale, feature-wise (one entry when global).
/// A zero scale marks a constant feature, which normalises to 0.
struct Normalization {
    NormalizationMode mode = NormalizationMode::none;
    std::vector<double> offset;
    std::vector<double> scale;
};

struct DatasetMeta {
    std::string name;
    std::optional<int> true_id;
    std::uint64_t seed = 0;
    Normalization normalization;
    std::map<std::string, std::string> config;  // generator settings
};

struct LabeledDataset {
    Matrix samples;  // N x D
    Matrix params;   // N x p ground-truth generator parameters
    DatasetMeta meta;

    std::size_t size() const { return samples.rows(); }
    std::size_t dim() const { return samples.cols(); }
};

/// Points (cos t, sin t) plus isotropic Gaussian noise. With `stratified`
/// the angles are 2 pi i / n; otherwise uniform.
LabeledDataset gen_circle(std::size_t n, std::uint64_t seed, double noise_sigma = 0.0,
                          bool stratified = false);

/// (x, y, x^2 + y^2) with (x, y) uniform on [-1, 1]^2.
LabeledDataset gen_paraboloid(std::size_t n, std::uint64_t seed);

/// Geometry in unit image coordinates ([0, 1]^2, x to the right, y down).
struct CouleConfig {
    std::size_t side = 32;
    double radius_min = 0.08;
    double radius_max = 0.2;
    double circle_margin = 0.03;  // minimum gap between the two rims
    double intensity1_min = 0.25, intensity1_max = 0.5;
    double intensity2_min = 0.55, intensity2_max = 0.8;
    double line_intensity_min = 0.85, line_intensity_max = 1.0;
    double line_length = 0.45;
    double line_thickness_px = 2.0;
    double midpoint_min = 0.25, midpoint_max = 0.75;
    /// Every shape stays within this distance of the image centre, so the
    /// whole phantom lies inside the disk seen by every projection.
    double content_radius = 0.47;

    void validate() const;
    std::map<std::string, std::string> describe() const;
};

/// (cx1, cy1, r1, i1, cx2, cy2, r2, i2, mx, my, angle, i_line).
struct CouleParams {
    double cx1 = 0, cy1 = 0, r1 = 0, intensity1 = 0;
    double cx2 = 0, cy2 = 0, r2 = 0, intensity2 = 0;
    double mx = 0, my = 0, angle = 0, line_intensity = 0;

    std::vector<double> to_vector() const;
    static CouleParams from_vector(std::span<const double> v);
};

/// Row-major side x side image in [0, 1]. Shapes are composited with max().
std::vector<double> render_coule(const CouleParams& p, const CouleConfig& cfg);

CouleParams sample_coule_params(const CouleConfig& cfg, Rng& rng);

LabeledDataset gen_coule(std::size_t n, const CouleConfig& cfg, std::uint64_t seed);

/// Parallel-beam Radon transform of a side x side image placed on
/// [-1, 1]^2 (row 0 at the top). Angles theta_i = i pi / n_angles, offsets
/// at the cell centres of [-1, 1]. Line integrals use the midpoint rule at
/// arc step `ds` (default half a pixel) over the chord of the unit disk,
/// sampling the image bilinearly. Returns n_angles x n_offsets.
Matrix radon(std::span<const double> image, std::size_t side, std::size_t n_angles,
             std::size_t n_offsets, std::optional<double> ds = std::nullopt);

std::vector<double> radon_angles(std::size_t n_angles);
std::vector<double> radon_offsets(std::size_t n_offsets);

/// Sinograms of every image in `images`, flattened row-major.
LabeledDataset sinogram_dataset(const LabeledDataset& images, std::size_t n_angles,
                                std::size_t n_offsets);

/// Affine min-max normalisation into [0, 1] recorded in the metadata.
/// Per-epoch jitter is applied by the trainer, never stored; the amplitude
/// is recorded under config["jitter"].
LabeledDataset normalize_and_jitter(const LabeledDataset& ds, double jitter,
                                    NormalizationMode mode = NormalizationMode::global);
Matrix denormalize(const Matrix& samples, const Normalization& n);

Container dataset_to_container(const LabeledDataset& ds);
LabeledDataset dataset_from_container(const Container& c);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// Rows [first, first + count) as a new dataset with the same metadata.
LabeledDataset dataset_slice(const LabeledDataset& ds, std::size_t first, std::size_t count);

}  // namespace manid
