#pragma once

// Mixture of invertible charts. Component k maps an embedded point x to
// F_k(x) = (z, r) with chart coordinates z in R^d and residual r; its
// per-sample loss is
//
//   L_k(x) = |F_k^{-1}(z, 0) - x|^2 + w_res |r|^2 + beta |z|^2 / 2
//
// Training alternates responsibilities r_k(x) ~ alpha_k exp(-L_k(x) / tau),
// responsibility-weighted gradient steps, and alpha_k = mean_x r_k(x).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "manid/container.hpp"
#include "manid/inn.hpp"
#include "manid/linalg.hpp"

namespace manid {

struct AtlasConfig {
    std::size_t components = 4;
    std::size_t chart_dim = 12;
    std::size_t blocks = 4;
    std::vector<std::size_t> hidden = {64, 64};
    double clamp = 5.0;
    double output_scale = 0.1;
    double residual_weight = 1.0;
    double beta = 1e-3;
    double temperature = 1.0;
    int epochs = 100;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double lr_final = 1e-5;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ComponentLoss {
    double reconstruction = 0.0;
    double residual = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

struct AtlasEpoch {
    int epoch = 0;
    double loss = 0.0;  // mean over samples of sum_k r_k(x) L_k(x)
    std::vector<double> weights;
};

/// Weights of the per-sample chart loss and the responsibility temperature.
struct ChartLossParams {
    double residual_weight = 1.0;
    double beta = 1e-3;
    double temperature = 1.0;
};

class MixtureAtlas {
public:
    MixtureAtlas() = default;
    MixtureAtlas(std::vector<CouplingStack> components, std::vector<double> weights, std::size_t chart_dim,
                 ChartLossParams params = {});

    std::size_t size() const { return components_.size(); }
    std::size_t dim() const { return components_.empty() ? 0 : components_.front().dim(); }
    std::size_t chart_dim() const { return chart_dim_; }
    const ChartLossParams& params() const { return params_; }
    const std::vector<CouplingStack>& components() const { return components_; }
    std::vector<CouplingStack>& components() { return components_; }
    const std::vector<double>& weights() const { return weights_; }
    void set_weights(std::vector<double> w);

    std::vector<AtlasEpoch> trace;
    double initial_loss = 0.0;

private:
    std::vector<CouplingStack> components_;
    std::vector<double> weights_;
    std::size_t chart_dim_ = 0;
    ChartLossParams params_;
};

/// Loss of one component on each row of `x`.
std::vector<ComponentLoss> component_losses(const CouplingStack& stack, const Matrix& x, std::size_t chart_dim,
                                            const ChartLossParams& params);

/// N x K responsibilities; each row is a probability vector.
Matrix responsibilities(const MixtureAtlas& atlas, const Matrix& x);

/// Mean over rows of sum_k r_k(x) L_k(x).
double mixture_loss(const MixtureAtlas& atlas, const Matrix& x);

using AtlasCallback = std::function<void(const AtlasEpoch&)>;

MixtureAtlas train_mixture(const Matrix& data, const AtlasConfig& cfg, const AtlasCallback& on_epoch = {});

struct ChartAssignment {
    std::size_t chart = 0;
    std::vector<double> responsibilities;
};

/// Most responsible chart; ties go to the lowest index.
ChartAssignment assign_chart(const MixtureAtlas& atlas, std::span<const double> x);

/// Decodes (step*j, step*l, rest) through chart k for j, l in [0, count).
/// `rest` fills chart coordinates 3..d (zero when empty). Rows are ordered
/// with j outermost.
Matrix chart_grid_samples(const MixtureAtlas& atlas, std::size_t k, double step, std::size_t count,
                          std::span<const double> rest = {});

Container save_atlas(const MixtureAtlas& atlas);
MixtureAtlas load_atlas(const Container& c);

}  // namespace manid
