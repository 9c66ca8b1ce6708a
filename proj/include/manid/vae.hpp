#pragma once

// beta-VAEs with a Gaussian latent head, trained either on the standard
// ELBO with a squared-error likelihood or on the Tanimoto embedding loss
// (alpha/2) T(x_hat, x) + beta KL + gamma sum|w|.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "manid/container.hpp"
#include "manid/linalg.hpp"
#include "manid/nn.hpp"

namespace manid {

enum class LossKind { elbo_l2, embedding_tanimoto };

/// How the trainer applies the Lasso term: as a subgradient added to the
/// loss gradient, or as a proximal soft-threshold after each Adam step.
enum class LassoStep { subgradient, proximal };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LassoStep s);
LassoStep lasso_step_from_string(const std::string& s);

struct TrainConfig {
    LossKind loss = LossKind::elbo_l2;
    double alpha = 1.0;         // Tanimoto weight (embedding loss)
    double beta = 1.0;          // KL weight
    double gamma = 0.0;         // Lasso weight
    LassoStep lasso_step = LassoStep::subgradient;
    double recon_weight = 1.0;  // elbo_l2 uses (recon_weight / 2) ||x - x_hat||^2
    int epochs = 300;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double lr_final = 1e-3;     // cosine-annealed towards this value
    double jitter = 0.01;       // uniform +-jitter added to the encoder input every epoch
    bool jitter_targets = false;  // reconstruct the jittered sample instead of the clean one
    std::uint64_t seed = 1;

    void validate() const;

    /// alpha = 2 D^2, beta = 25, gamma = 1e-4 for D x D images.
    static TrainConfig embedding_defaults(std::size_t image_side);
};

struct VaeArchitecture {
    std::size_t ambient_dim = 0;
    std::size_t latent_dim = 0;
    std::vector<std::size_t> encoder_hidden;
    std::vector<std::size_t> decoder_hidden;
    Activation hidden = Activation::leaky_relu;
    Activation decoder_output = Activation::linear;
    double slope = 0.01;
};

struct LossTerms {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double lasso = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    LossTerms terms;
};

/// Encoder emits (mu, log sigma^2) stacked as 2m outputs; decoder maps the
/// m-dimensional latent back to the ambient space.
class VaeModel {
public:
    VaeModel() = default;
    VaeModel(MlpNet encoder, MlpNet decoder);

    static VaeModel create(const VaeArchitecture& arch, Rng& rng);

    std::size_t latent_dim() const { return latent_dim_; }
    std::size_t ambient_dim() const { return ambient_dim_; }
    const MlpNet& encoder() const { return encoder_; }
    const MlpNet& decoder() const { return decoder_; }
    MlpNet& encoder() { return encoder_; }
    MlpNet& decoder() { return decoder_; }

    /// Mean head only; the noise-free map used for all metric analysis.
    std::vector<double> encode_mean(std::span<const double> x) const;
    std::vector<double> decode(std::span<const double> z) const;
    std::vector<double> reconstruct(std::span<const double> x) const;
    Matrix encode_mean_batch(const Matrix& x) const;
    Matrix decode_batch(const Matrix& z) const;
    Matrix reconstruct_batch(const Matrix& x) const;

    std::vector<EpochRecord> trace;

private:
    MlpNet encoder_;
    MlpNet decoder_;
    std::size_t latent_dim_ = 0;
    std::size_t ambient_dim_ = 0;
};

double kl_standard_normal(std::span<const double> mu, std::span<const double> logvar);

/// T(x, y) = 1 - x.y / (|x|^2 + |y|^2 - x.y); T(0, 0) := 0.
double tanimoto(std::span<const double> x, std::span<const double> y);

/// |x - y|^2 <= 2 D^2 T / (1 - T) for D x D images; true when T == 1.
bool tanimoto_bound_check(std::span<const double> x, std::span<const double> y,
                          std::size_t image_side);

/// (recon_weight / 2) |x - D(z)|^2 + beta KL with z = mu + sigma * noise.
LossTerms elbo_loss(const VaeModel& model, std::span<const double> x, double beta,
                    std::span<const double> noise, double recon_weight = 1.0);

/// (alpha / 2) T(D(z), x) + beta KL + gamma sum|w|.
LossTerms embedding_loss(const VaeModel& model, std::span<const double> x,
                         const TrainConfig& cfg, std::span<const double> noise);

struct VaeGradients {
    NetGradients encoder;
    NetGradients decoder;
};

/// Batch-mean loss of the configured kind; fills gradients when requested.
/// `noise` holds one standard-normal row per sample.
LossTerms batch_loss(const VaeModel& model, const Matrix& x, const Matrix& noise,
                     const TrainConfig& cfg, VaeGradients* grads);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from a fresh initialisation seeded by cfg.seed.
VaeModel train_vae(const Matrix& samples, const VaeArchitecture& arch, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});
/// Continues training an existing model.
VaeModel train_vae(const Matrix& samples, VaeModel model, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Mean of 0.5 |x - reconstruct(x)|^2 over rows.
double mean_reconstruction_error(const VaeModel& model, const Matrix& samples);
/// Mean squared error per coordinate of the deterministic reconstruction.
double mean_squared_error(const VaeModel& model, const Matrix& samples);

Container save_vae(const VaeModel& model);
VaeModel load_vae(const Container& c);

/// CSV with header epoch,total,reconstruction,kl,lasso.
std::string loss_trace_csv(const std::vector<EpochRecord>& trace);

}  // namespace manid
