#pragma once

// Experiment plumbing shared by the CLI and the acceptance runner: the
// serializable run configuration, tuned presets, pruning sweeps, the ID
// comparison table, plots and run-directory manifests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manid/atlas.hpp"
#include "manid/bridge.hpp"
#include "manid/data.hpp"
#include "manid/geometry.hpp"
#include "manid/vae.hpp"

namespace manid {

struct DatasetSpec {
    std::string kind = "circle";  // circle | paraboloid | coule | coule-sinogram
    std::size_t n = 2000;
    std::size_t res = 32;          // image side
    std::size_t angles = 32;       // sinogram rows
    std::size_t offsets = 32;      // sinogram columns
    double sigma = 0.0;            // circle noise
    bool stratified = false;       // circle angles on a regular grid
    /// Unset: global for sinograms, none otherwise.
    std::optional<NormalizationMode> normalization;
};

struct ModelSpec {
    std::size_t latent_dim = 3;
    std::vector<std::size_t> encoder_hidden = {64, 64};
    std::vector<std::size_t> decoder_hidden = {64, 64};
    Activation hidden = Activation::leaky_relu;
    Activation output = Activation::linear;
    double slope = 0.01;
};

struct IdSpec {
    IdConfig config;
    MetricSide side = MetricSide::encoder_gram;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    ModelSpec model;
    TrainConfig train;
    IdSpec id;
    std::vector<double> prune = {0.0, 0.5, 0.9, 0.96, 0.99, 0.993, 0.996, 0.998, 0.999};
    BridgeConfig bridge;
    AtlasConfig atlas;
    std::filesystem::path out_dir = "run";
    std::uint64_t seed = 1;

    void validate() const;
    /// Copies the global seed into every seeded stage.
    void apply_seed(std::uint64_t s);

    /// Tuned settings for one dataset kind at desk scale.
    static ExperimentConfig preset(const std::string& kind);
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Missing keys keep their preset values; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

LabeledDataset make_dataset(const DatasetSpec& spec, std::uint64_t seed);
VaeArchitecture make_architecture(const ModelSpec& spec, std::size_t ambient_dim);

// Pruning sweep --------------------------------------------------------------

struct PruneRow {
    double p = 0.0;
    std::size_t masked = 0;
    double loss = 0.0;  // mean 0.5 |x - x_hat|^2
    IdEstimate estimate;
};

/// Prunes a copy of the model at each ratio (every dense layer of encoder
/// and decoder takes part) and evaluates loss and ID on `samples`.
std::vector<PruneRow> run_prune_sweep(const VaeModel& model, const Matrix& samples, std::span<const double> ps,
                                      const IdSpec& id);

/// Largest swept p such that every p' <= p keeps loss within `tolerance`
/// times the unpruned loss and the unpruned ID. Empty when p = 0 fails.
std::optional<double> prune_knee(const std::vector<PruneRow>& rows, double tolerance = 1.2);

/// Header p,masked,loss,id,gap_ratio,no_gap.
std::string prune_csv(const std::vector<PruneRow>& rows);
std::string prune_svg(const std::vector<PruneRow>& rows);

// ID comparison table -------------------------------------------------------

struct Table1Row {
    std::string method;  // lPCA, MLE, CorrID, ours
    double images = 0.0;
    double sinograms = 0.0;
    bool operator==(const Table1Row&) const = default;
};

struct Table1Config {
    std::size_t sample_size = 500;
    std::uint64_t seed = 1;
    std::size_t lpca_k = 40;
    double lpca_theta = 0.95;
    std::size_t mle_k1 = 10, mle_k2 = 20;
    IdSpec id;
};

/// Baselines act on the same seeded subsample the embedder ID uses.
std::vector<Table1Row> run_table1(const Matrix& images, const Matrix& sinograms, const VaeModel& w_images,
                                  const VaeModel& w_sinograms, const Table1Config& cfg);
/// Header method,images,sinograms.
std::string table1_csv(const std::vector<Table1Row>& rows);
std::vector<Table1Row> parse_table1_csv(const std::string& text);

// Plots and run directories -------------------------------------------------

/// Log-scale eigenvalue scatter with the gap marked, written to `svg_path`;
/// the spectrum CSV goes next to it with extension .csv.
void emit_spectrum_plot(const IdEstimate& est, const std::filesystem::path& svg_path);
std::string spectrum_svg(const IdEstimate& est, const std::string& title = "mean pullback spectrum");

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
/// manifest.json listing every regular file under `dir` (itself excluded)
/// with its size and SHA-256, sorted by relative path.
void write_manifest(const std::filesystem::path& dir);

}  // namespace manid
