#pragma once

// Dense multilayer perceptrons: batched forward/backward passes, analytic
// input Jacobians, Adam updates, and optional per-weight prune masks.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "manid/container.hpp"
#include "manid/linalg.hpp"
#include "manid/rng.hpp"

namespace manid {

enum class Activation { linear, relu, leaky_relu, tanh, sigmoid, softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Fully connected layer y = act(W x + b). When a mask is present the layer
/// computes with W .* mask; the raw weights are left untouched so masks can
/// be replaced without retraining.
struct DenseLayer {
    Matrix weight;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::linear;
    double slope = 0.01;  // leaky_relu only
    std::optional<Matrix> mask;

    std::size_t in() const { return weight.cols(); }
    std::size_t out() const { return weight.rows(); }
    Matrix effective_weight() const;
};

struct LayerGradient {
    Matrix weight;
    std::vector<double> bias;
};

struct NetGradients {
    std::vector<LayerGradient> layers;

    void zero();
    void scale(double s);
    void add(const NetGradients& other);
};

/// Per-layer activations recorded by forward_batch for backward_batch.
struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[l] is the input of layer l; inputs[L] the output
    std::vector<Matrix> pre;     // pre-activations
};

class MlpNet {
public:
    struct Spec {
        std::vector<std::size_t> sizes;  // input, hidden..., output
        Activation hidden = Activation::leaky_relu;
        Activation output = Activation::linear;
        double slope = 0.01;
    };

    MlpNet() = default;
    explicit MlpNet(std::vector<DenseLayer> layers);

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static MlpNet random(const Spec& spec, Rng& rng);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t depth() const { return layers_.size(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
    DenseLayer& layer(std::size_t i) { return layers_[i]; }

    std::vector<double> forward(std::span<const double> x) const;
    /// Rows of `x` are samples.
    Matrix forward_batch(const Matrix& x, ForwardCache* cache = nullptr) const;
    /// Back-propagates d(loss)/d(output) through the cached pass. Gradients
    /// are accumulated into `grads` when given; returns d(loss)/d(input).
    Matrix backward_batch(const ForwardCache& cache, const Matrix& d_out,
                          NetGradients* grads) const;

    /// d output_i / d x_j, out x in. ReLU-type derivatives at 0 are taken
    /// from the left.
    Matrix jacobian(std::span<const double> x) const;
    /// Rows [first, first + count) of the Jacobian.
    Matrix jacobian_rows(std::span<const double> x, std::size_t first, std::size_t count) const;

    NetGradients zero_gradients() const;
    std::size_t weight_count() const;
    std::size_t parameter_count() const;
    /// Sum of |w| over effective weights (biases excluded).
    double l1_weight_norm() const;
    bool has_masks() const;
    void clear_masks();

    bool operator==(const MlpNet& other) const;

private:
    void validate() const;
    std::vector<DenseLayer> layers_;
};

struct AdamState {
    long long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// When positive, every unmasked weight also takes a soft-threshold step
    /// for l1 * |w| with its own Adam step size, which sets weights exactly
    /// to zero once their loss gradient stays below l1.
    double l1 = 0.0;
    NetGradients m;
    NetGradients v;

    AdamState() = default;
    explicit AdamState(const MlpNet& net, double lr = 1e-3);
};

/// One bias-corrected Adam update. Masked weights receive no update.
void adam_step(MlpNet& net, const NetGradients& grads, AdamState& state);

// Pruning -------------------------------------------------------------------

struct PruneResult {
    std::size_t total_selected = 0;
    std::size_t masked = 0;
    /// retained[net][layer]; unselected layers report their full weight count.
    std::vector<std::vector<std::size_t>> retained;
};

/// Returns true when (net index, layer index) takes part in pruning.
using LayerFilter = bool (*)(std::size_t net, std::size_t layer);

/// Number of weights masked out of `total` at ratio p: ceil(p * total),
/// insensitive to floating-point noise in the product.
std::size_t pruned_weight_count(std::size_t total, double p);

/// Global unstructured magnitude pruning: masks the ceil(p * T) weights with
/// smallest |w| across every selected layer of every net (ties broken by
/// net, layer, then row-major position). Existing masks are replaced.
PruneResult prune_global_l1(std::span<MlpNet* const> nets, double p,
                            LayerFilter filter = nullptr);

// Checkpoints ---------------------------------------------------------------

Container save_mlp(const MlpNet& net);
MlpNet load_mlp(const Container& c);

}  // namespace manid
