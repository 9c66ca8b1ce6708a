#include "manid/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "manid/errors.hpp"

namespace manid {

void AtlasConfig::validate() const {
    if (components == 0) throw ConfigError("atlas needs at least one component");
    if (chart_dim == 0) throw ConfigError("chart dimension must be positive");
    if (blocks == 0) throw ConfigError("atlas components need at least one coupling block");
    if (!(clamp > 0.0)) throw ConfigError("scale clamp must be positive");
    if (!(residual_weight >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(lr > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
}

MixtureAtlas::MixtureAtlas(std::vector<CouplingStack> components, std::vector<double> weights,
                           std::size_t chart_dim, ChartLossParams params)
    : components_(std::move(components)), chart_dim_(chart_dim), params_(params) {
    if (components_.empty()) throw ConfigError("atlas needs at least one component");
    for (const auto& c : components_)
        if (c.dim() != components_.front().dim()) throw DimensionError("atlas components must share their dimension");
    if (chart_dim_ == 0 || chart_dim_ > dim()) throw DimensionError("chart dimension must lie in [1, n]");
    set_weights(std::move(weights));
}

void MixtureAtlas::set_weights(std::vector<double> w) {
    if (w.size() != components_.size()) throw DimensionError("one mixing weight per component");
    double s = 0.0;
    for (double v : w) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("mixing weights must be positive");
        s += v;
    }
    for (double& v : w) v /= s;
    weights_ = std::move(w);
}

namespace {

struct BatchPass {
    StackCache fwd, inv;
    Matrix y;      // F(x)
    Matrix xhat;   // F^{-1}(z, 0)
};

BatchPass run_pass(const CouplingStack& stack, const Matrix& x, std::size_t d, bool record) {
    BatchPass p;
    p.y = stack.forward_batch(x, record ? &p.fwd : nullptr);
    Matrix padded(x.rows(), stack.dim());
    for (std::size_t i = 0; i < x.rows(); ++i) std::copy_n(p.y.row(i).begin(), d, padded.row(i).begin());
    p.xhat = stack.inverse_batch(padded, record ? &p.inv : nullptr);
    return p;
}

std::vector<ComponentLoss> losses_from_pass(const BatchPass& p, const Matrix& x, std::size_t d,
                                            const ChartLossParams& params) {
    std::vector<ComponentLoss> out(x.rows());
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        ComponentLoss& l = out[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double e = p.xhat(i, j) - x(i, j);
            l.reconstruction += e * e;
        }
        for (std::size_t j = 0; j < d; ++j) l.kl += 0.5 * p.y(i, j) * p.y(i, j);
        for (std::size_t j = d; j < n; ++j) l.residual += p.y(i, j) * p.y(i, j);
        l.total = l.reconstruction + params.residual_weight * l.residual + params.beta * l.kl;
    }
    return out;
}

Matrix loss_table(const MixtureAtlas& atlas, const Matrix& x) {
    Matrix L(x.rows(), atlas.size());
    for (std::size_t k = 0; k < atlas.size(); ++k) {
        const auto lk = component_losses(atlas.components()[k], x, atlas.chart_dim(), atlas.params());
        for (std::size_t i = 0; i < x.rows(); ++i) L(i, k) = lk[i].total;
    }
    return L;
}

Matrix responsibilities_from(const Matrix& L, const std::vector<double>& alpha, double tau) {
    Matrix r(L.rows(), L.cols());
    for (std::size_t i = 0; i < L.rows(); ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < L.cols(); ++k) {
            r(i, k) = std::log(alpha[k]) - L(i, k) / tau;
            top = std::max(top, r(i, k));
        }
        double s = 0.0;
        for (std::size_t k = 0; k < L.cols(); ++k) s += (r(i, k) = std::exp(r(i, k) - top));
        for (std::size_t k = 0; k < L.cols(); ++k) r(i, k) /= s;
    }
    return r;
}

double weighted_mean_loss(const Matrix& L, const Matrix& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) s += L.data()[i] * r.data()[i];
    return s / static_cast<double>(L.rows());
}

std::vector<double> mean_rows(const Matrix& r) {
    std::vector<double> a(r.cols(), 0.0);
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t k = 0; k < r.cols(); ++k) a[k] += r(i, k);
    // Keep every weight strictly positive so log(alpha) stays finite.
    for (double& v : a) v = std::max(v / static_cast<double>(r.rows()), 1e-12);
    return a;
}

// Gradient of (1/B) sum_i w_i L(x_i) for one component.
StackGradients weighted_gradient(const CouplingStack& stack, const Matrix& x, std::span<const double> w,
                                 std::size_t d, const ChartLossParams& params) {
    const BatchPass p = run_pass(stack, x, d, true);
    const std::size_t B = x.rows(), n = x.cols();
    const double inv_b = 1.0 / static_cast<double>(B);
    StackGradients g = stack.zero_gradients();
    Matrix d_xhat(B, n);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < n; ++j) d_xhat(i, j) = 2.0 * w[i] * inv_b * (p.xhat(i, j) - x(i, j));
    const Matrix d_padded = stack.backward_inverse(p.inv, d_xhat, &g);
    Matrix d_y(B, n);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < d; ++j) d_y(i, j) = d_padded(i, j) + params.beta * w[i] * inv_b * p.y(i, j);
        for (std::size_t j = d; j < n; ++j) d_y(i, j) = 2.0 * params.residual_weight * w[i] * inv_b * p.y(i, j);
    }
    stack.backward_forward(p.fwd, d_y, &g);
    return g;
}

}  // namespace

std::vector<ComponentLoss> component_losses(const CouplingStack& stack, const Matrix& x, std::size_t chart_dim,
                                            const ChartLossParams& params) {
    if (x.cols() != stack.dim()) throw DimensionError("component_losses: sample width mismatch");
    if (chart_dim == 0 || chart_dim > stack.dim()) throw DimensionError("chart dimension must lie in [1, n]");
    return losses_from_pass(run_pass(stack, x, chart_dim, false), x, chart_dim, params);
}

Matrix responsibilities(const MixtureAtlas& atlas, const Matrix& x) {
    return responsibilities_from(loss_table(atlas, x), atlas.weights(), atlas.params().temperature);
}

double mixture_loss(const MixtureAtlas& atlas, const Matrix& x) {
    const Matrix L = loss_table(atlas, x);
    return weighted_mean_loss(L, responsibilities_from(L, atlas.weights(), atlas.params().temperature));
}

MixtureAtlas train_mixture(const Matrix& data, const AtlasConfig& cfg, const AtlasCallback& on_epoch) {
    cfg.validate();
    if (data.rows() == 0) throw DimensionError("train_mixture: empty dataset");
    if (cfg.chart_dim > data.cols()) throw DimensionError("chart dimension exceeds the data dimension");
    const std::size_t N = data.rows(), K = cfg.components, n = data.cols();

    Rng rng(cfg.seed);
    std::vector<CouplingStack> comps;
    for (std::size_t k = 0; k < K; ++k) {
        Rng init(cfg.seed * 1000003ULL + k);
        comps.push_back(CouplingStack::create(n, cfg.blocks, cfg.hidden, init, cfg.clamp, cfg.output_scale));
    }
    const ChartLossParams params{cfg.residual_weight, cfg.beta, cfg.temperature};
    MixtureAtlas atlas(std::move(comps), std::vector<double>(K, 1.0), cfg.chart_dim, params);
    std::vector<StackAdam> opts;
    for (const auto& c : atlas.components()) opts.emplace_back(c, cfg.lr);

    Matrix L = loss_table(atlas, data);
    Matrix r(N, K, 1.0 / static_cast<double>(K));  // uniform warm start
    atlas.initial_loss = weighted_mean_loss(L, r);

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::min(cfg.batch_size, N);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
        const double lr = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
        for (auto& o : opts) o.set_lr(lr);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < N; start += bs) {
            const std::size_t B = std::min(bs, N - start);
            Matrix xb(B, n), wb(K, B);
            for (std::size_t i = 0; i < B; ++i) {
                const std::size_t src = order[start + i];
                std::copy(data.row(src).begin(), data.row(src).end(), xb.row(i).begin());
                for (std::size_t k = 0; k < K; ++k) wb(k, i) = r(src, k);
            }
            for (std::size_t k = 0; k < K; ++k) {
                const StackGradients g = weighted_gradient(atlas.components()[k], xb, wb.row(k), cfg.chart_dim, params);
                adam_step(atlas.components()[k], g, opts[k]);
            }
        }
        // E-step on the updated components, then the mixing weights.
        L = loss_table(atlas, data);
        for (double v : L.values())
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "atlas training diverged at epoch " << epoch;
                throw DivergenceError(msg.str());
            }
        r = responsibilities_from(L, atlas.weights(), cfg.temperature);
        atlas.set_weights(mean_rows(r));
        r = responsibilities_from(L, atlas.weights(), cfg.temperature);
        AtlasEpoch rec{epoch, weighted_mean_loss(L, r), atlas.weights()};
        atlas.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return atlas;
}

ChartAssignment assign_chart(const MixtureAtlas& atlas, std::span<const double> x) {
    if (x.size() != atlas.dim()) throw DimensionError("assign_chart: point dimension mismatch");
    const Matrix xm(1, x.size(), std::vector<double>(x.begin(), x.end()));
    const Matrix r = responsibilities(atlas, xm);
    ChartAssignment a;
    a.responsibilities.assign(r.row(0).begin(), r.row(0).end());
    // max_element returns the first maximum, which is the lowest index.
    a.chart = static_cast<std::size_t>(std::max_element(a.responsibilities.begin(), a.responsibilities.end()) -
                                       a.responsibilities.begin());
    return a;
}

Matrix chart_grid_samples(const MixtureAtlas& atlas, std::size_t k, double step, std::size_t count,
                          std::span<const double> rest) {
    if (k >= atlas.size()) throw DimensionError("chart index out of range");
    const std::size_t d = atlas.chart_dim();
    if (d < 2) throw DimensionError("chart grid needs a chart dimension of at least 2");
    if (!rest.empty() && rest.size() != d - 2) throw DimensionError("grid fixed coordinates must have d - 2 entries");
    Matrix out(count * count, atlas.dim());
    std::vector<double> z(d, 0.0);
    std::copy(rest.begin(), rest.end(), z.begin() + 2);
    for (std::size_t j = 0; j < count; ++j)
        for (std::size_t l = 0; l < count; ++l) {
            z[0] = step * static_cast<double>(j);
            z[1] = step * static_cast<double>(l);
            const auto x = chart_decode(atlas.components()[k], z);
            std::copy(x.begin(), x.end(), out.row(j * count + l).begin());
        }
    return out;
}

Container save_atlas(const MixtureAtlas& atlas) {
    Container c("atlas");
    c.set("dim", atlas.dim());
    c.set("chart_dim", atlas.chart_dim());
    c.set("components", atlas.size());
    c.set("residual_weight", atlas.params().residual_weight);
    c.set("beta", atlas.params().beta);
    c.set("temperature", atlas.params().temperature);
    c.set("initial_loss", atlas.initial_loss);
    c.add_block("weights", atlas.weights());
    std::vector<double> trace;
    for (const auto& e : atlas.trace) {
        trace.push_back(e.epoch);
        trace.push_back(e.loss);
    }
    c.add_block("trace", trace);
    for (std::size_t k = 0; k < atlas.size(); ++k) c.embed("chart" + std::to_string(k), save_stack(atlas.components()[k]));
    return c;
}

MixtureAtlas load_atlas(const Container& c) {
    if (c.kind() != "atlas") throw FormatError("expected an atlas, got '" + c.kind() + "'");
    std::vector<CouplingStack> comps;
    const std::size_t K = c.get_size("components");
    for (std::size_t k = 0; k < K; ++k) comps.push_back(load_stack(c.extract("chart" + std::to_string(k))));
    const ChartLossParams params{c.get_double("residual_weight"), c.get_double("beta"), c.get_double("temperature")};
    MixtureAtlas atlas(std::move(comps), c.block("weights"), c.get_size("chart_dim"), params);
    if (atlas.dim() != c.get_size("dim")) throw FormatError("atlas dimension does not match its charts");
    atlas.initial_loss = c.get_double("initial_loss");
    const auto& t = c.block("trace");
    if (t.size() % 2 != 0) throw FormatError("atlas trace block has odd length");
    for (std::size_t i = 0; i + 1 < t.size(); i += 2)
        atlas.trace.push_back({static_cast<int>(t[i]), t[i + 1], {}});
    return atlas;
}

}  // namespace manid
