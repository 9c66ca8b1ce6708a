#pragma once

// Latent-space maps between the image and sinogram embeddings, and the
// composed reconstruction D_I(R_inv(R_fwd(E_I(x)))).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "manid/container.hpp"
#include "manid/linalg.hpp"
#include "manid/nn.hpp"
#include "manid/vae.hpp"

namespace manid {

/// Feature-wise affine map x -> (x - mean) / scale.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardization identity(std::size_t n);
    bool operator==(const Standardization&) const = default;
};

/// Dense blocks joined by standardization layers. Training standardizes
/// with batch statistics; freeze() fixes statistics from a full pass so
/// inference is a plain affine map.
class BridgeNet {
public:
    struct Spec {
        std::size_t dim = 0;
        std::size_t hidden = 128;
        std::size_t blocks = 3;
        Activation activation = Activation::leaky_relu;
    };

    struct Cache {
        std::vector<ForwardCache> blocks;
        std::vector<Matrix> normalized;  // standardized inputs of blocks 1..
        std::vector<std::vector<double>> inv_std;
    };

    BridgeNet() = default;
    BridgeNet(std::vector<MlpNet> blocks, std::vector<Standardization> norms);
    static BridgeNet create(const Spec& spec, Rng& rng);

    std::size_t dim() const { return blocks_.empty() ? 0 : blocks_.front().input_dim(); }
    const std::vector<MlpNet>& blocks() const { return blocks_; }
    std::vector<MlpNet>& blocks() { return blocks_; }
    const std::vector<Standardization>& norms() const { return norms_; }

    std::vector<double> forward(std::span<const double> x) const;
    Matrix forward_batch(const Matrix& x) const;

    Matrix train_forward(const Matrix& x, Cache& cache) const;
    void train_backward(const Cache& cache, const Matrix& d_out, std::vector<NetGradients>& grads) const;
    std::vector<NetGradients> zero_gradients() const;

    void freeze(const Matrix& data);

    bool operator==(const BridgeNet&) const = default;

private:
    std::vector<MlpNet> blocks_;
    std::vector<Standardization> norms_;  // one between each pair of blocks
};

struct BridgeConfig {
    std::size_t hidden = 128;
    std::size_t blocks = 3;
    int epochs = 200;
    std::size_t batch_size = 256;
    double lr = 1e-2;
    double lr_final = 1e-5;
    std::uint64_t seed = 1;

    void validate() const;
};

struct BridgeEpoch {
    int epoch = 0;
    double forward_mse = 0.0;
    double inverse_mse = 0.0;
};

struct BridgeTraining {
    BridgeNet forward;  // image latent -> sinogram latent
    BridgeNet inverse;  // sinogram latent -> image latent
    std::vector<BridgeEpoch> trace;
    double initial_forward_mse = 0.0;
    double initial_inverse_mse = 0.0;
};

using BridgeCallback = std::function<void(const BridgeEpoch&)>;

/// Mean squared error per coordinate between two latent sets.
double latent_mse(const BridgeNet& net, const Matrix& from, const Matrix& to);

/// Fits both maps on paired latent codes (row i of each matrix belongs to
/// the same object).
BridgeTraining train_bridge_latents(const Matrix& image_latents, const Matrix& sinogram_latents,
                                    const BridgeConfig& cfg, const BridgeCallback& on_epoch = {});

/// Encodes both datasets with the frozen embedders, then trains the maps.
BridgeTraining train_bridge(const Matrix& images, const Matrix& sinograms, const VaeModel& w_images,
                            const VaeModel& w_sinograms, const BridgeConfig& cfg,
                            const BridgeCallback& on_epoch = {});

struct BridgePipeline {
    VaeModel w_images;
    VaeModel w_sinograms;
    BridgeNet r_fwd;
    BridgeNet r_inv;

    std::size_t latent_dim() const { return w_images.latent_dim(); }
    void validate() const;
};

/// D_I(R_inv(R_fwd(E_I(x)))) clipped to [0, 1].
std::vector<double> reconstruct_image(const BridgePipeline& p, std::span<const double> x);
Matrix reconstruct_images(const BridgePipeline& p, const Matrix& x);
/// D_S(R_fwd(E_I(x))).
std::vector<double> sinogram_from_image_latent(const BridgePipeline& p, std::span<const double> x);

Container save_bridge_net(const BridgeNet& net);
BridgeNet load_bridge_net(const Container& c);
Container save_pipeline(const BridgePipeline& p);
BridgePipeline load_pipeline(const Container& c);

}  // namespace manid
