#include "manid/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "manid/errors.hpp"

namespace manid {

namespace {

constexpr double kVarEps = 1e-5;

void column_stats(const Matrix& h, std::vector<double>& mean, std::vector<double>& scale) {
    const std::size_t n = h.rows(), c = h.cols();
    mean.assign(c, 0.0);
    scale.assign(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) mean[j] += h(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double d = h(i, j) - mean[j];
            scale[j] += d * d;
        }
    for (double& s : scale) s = std::sqrt(s / static_cast<double>(n) + kVarEps);
}

void apply(const Standardization& s, Matrix& h) {
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) = (h(i, j) - s.mean[j]) / s.scale[j];
}

double cosine_lr(const BridgeConfig& cfg, int epoch) {
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    return cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
}

Matrix gather(const Matrix& m, const std::vector<std::size_t>& order, std::size_t start, std::size_t count) {
    Matrix out(count, m.cols());
    for (std::size_t i = 0; i < count; ++i) {
        const auto r = m.row(order[start + i]);
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

// One Adam step on the batch MSE; returns the batch loss.
double fit_batch(BridgeNet& net, std::vector<AdamState>& opt, const Matrix& x, const Matrix& t) {
    BridgeNet::Cache cache;
    const Matrix y = net.train_forward(x, cache);
    Matrix d(y.rows(), y.cols());
    const double norm = 1.0 / static_cast<double>(y.size());
    double loss = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double e = y.values()[k] - t.values()[k];
        loss += e * e;
        d.values()[k] = 2.0 * e * norm;
    }
    auto grads = net.zero_gradients();
    net.train_backward(cache, d, grads);
    for (std::size_t b = 0; b < net.blocks().size(); ++b) adam_step(net.blocks()[b], grads[b], opt[b]);
    return loss * norm;
}

}  // namespace

Standardization Standardization::identity(std::size_t n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

BridgeNet::BridgeNet(std::vector<MlpNet> blocks, std::vector<Standardization> norms)
    : blocks_(std::move(blocks)), norms_(std::move(norms)) {
    if (blocks_.empty()) throw DimensionError("bridge net needs at least one block");
    if (norms_.size() + 1 != blocks_.size()) throw DimensionError("bridge net needs one standardization per block joint");
    for (std::size_t i = 0; i + 1 < blocks_.size(); ++i) {
        const std::size_t w = blocks_[i].output_dim();
        if (blocks_[i + 1].input_dim() != w) throw DimensionError("bridge blocks do not chain");
        if (norms_[i].mean.size() != w || norms_[i].scale.size() != w)
            throw DimensionError("standardization width mismatch");
    }
    if (blocks_.front().input_dim() != blocks_.back().output_dim())
        throw DimensionError("bridge net must map R^m to R^m");
}

BridgeNet BridgeNet::create(const Spec& spec, Rng& rng) {
    if (spec.dim == 0 || spec.hidden == 0) throw ConfigError("bridge dimensions must be positive");
    if (spec.blocks == 0) throw ConfigError("bridge net needs at least one block");
    std::vector<MlpNet> blocks;
    std::vector<Standardization> norms;
    for (std::size_t b = 0; b < spec.blocks; ++b) {
        const bool last = b + 1 == spec.blocks;
        const std::size_t in = b == 0 ? spec.dim : spec.hidden;
        const std::size_t out = last ? spec.dim : spec.hidden;
        MlpNet::Spec s{{in, out}, spec.activation, last ? Activation::linear : spec.activation};
        blocks.push_back(MlpNet::random(s, rng));
        if (!last) norms.push_back(Standardization::identity(out));
    }
    return BridgeNet(std::move(blocks), std::move(norms));
}

std::vector<double> BridgeNet::forward(std::span<const double> x) const {
    const Matrix xm(1, x.size(), std::vector<double>(x.begin(), x.end()));
    const Matrix y = forward_batch(xm);
    return {y.row(0).begin(), y.row(0).end()};
}

Matrix BridgeNet::forward_batch(const Matrix& x) const {
    if (x.cols() != dim()) throw DimensionError("bridge input dimension mismatch");
    Matrix h = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (b > 0) apply(norms_[b - 1], h);
        h = blocks_[b].forward_batch(h);
    }
    return h;
}

Matrix BridgeNet::train_forward(const Matrix& x, Cache& cache) const {
    if (x.cols() != dim()) throw DimensionError("bridge input dimension mismatch");
    cache.blocks.assign(blocks_.size(), {});
    cache.normalized.clear();
    cache.inv_std.clear();
    Matrix h = x;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (b > 0) {
            Standardization s;
            column_stats(h, s.mean, s.scale);
            apply(s, h);
            std::vector<double> inv(s.scale.size());
            for (std::size_t j = 0; j < inv.size(); ++j) inv[j] = 1.0 / s.scale[j];
            cache.normalized.push_back(h);
            cache.inv_std.push_back(std::move(inv));
        }
        h = blocks_[b].forward_batch(h, &cache.blocks[b]);
    }
    return h;
}

void BridgeNet::train_backward(const Cache& cache, const Matrix& d_out, std::vector<NetGradients>& grads) const {
    if (grads.size() != blocks_.size()) throw DimensionError("bridge gradient count mismatch");
    Matrix d = d_out;
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        d = blocks_[b].backward_batch(cache.blocks[b], d, &grads[b]);
        if (b == 0) break;
        const Matrix& n = cache.normalized[b - 1];
        const auto& inv = cache.inv_std[b - 1];
        const std::size_t rows = d.rows(), cols = d.cols();
        for (std::size_t j = 0; j < cols; ++j) {
            double md = 0.0, mdn = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                md += d(i, j);
                mdn += d(i, j) * n(i, j);
            }
            md /= static_cast<double>(rows);
            mdn /= static_cast<double>(rows);
            for (std::size_t i = 0; i < rows; ++i) d(i, j) = inv[j] * (d(i, j) - md - n(i, j) * mdn);
        }
    }
}

std::vector<NetGradients> BridgeNet::zero_gradients() const {
    std::vector<NetGradients> g;
    for (const auto& b : blocks_) g.push_back(b.zero_gradients());
    return g;
}

void BridgeNet::freeze(const Matrix& data) {
    if (data.rows() == 0) throw DimensionError("freeze needs data");
    if (data.cols() != dim()) throw DimensionError("bridge input dimension mismatch");
    Matrix h = data;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (b > 0) {
            column_stats(h, norms_[b - 1].mean, norms_[b - 1].scale);
            apply(norms_[b - 1], h);
        }
        h = blocks_[b].forward_batch(h);
    }
}

void BridgeConfig::validate() const {
    if (hidden == 0) throw ConfigError("bridge hidden width must be positive");
    if (blocks == 0) throw ConfigError("bridge needs at least one block");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
}

double latent_mse(const BridgeNet& net, const Matrix& from, const Matrix& to) {
    if (from.rows() != to.rows() || to.cols() != net.dim()) throw DimensionError("latent_mse: shape mismatch");
    if (from.rows() == 0) return 0.0;
    const Matrix y = net.forward_batch(from);
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double e = y.values()[k] - to.values()[k];
        s += e * e;
    }
    return s / static_cast<double>(y.size());
}

BridgeTraining train_bridge_latents(const Matrix& image_latents, const Matrix& sinogram_latents,
                                    const BridgeConfig& cfg, const BridgeCallback& on_epoch) {
    cfg.validate();
    if (image_latents.rows() != sinogram_latents.rows())
        throw DimensionError("image and sinogram latents must be paired row by row");
    if (image_latents.cols() != sinogram_latents.cols())
        throw DimensionError("both embeddings must have the same latent dimension");
    if (image_latents.rows() == 0) throw DimensionError("train_bridge: empty dataset");
    const std::size_t N = image_latents.rows(), m = image_latents.cols();

    Rng rng(cfg.seed);
    const BridgeNet::Spec spec{m, cfg.hidden, cfg.blocks, Activation::leaky_relu};
    BridgeTraining out;
    out.forward = BridgeNet::create(spec, rng);
    out.inverse = BridgeNet::create(spec, rng);
    out.initial_forward_mse = latent_mse(out.forward, image_latents, sinogram_latents);
    out.initial_inverse_mse = latent_mse(out.inverse, sinogram_latents, image_latents);
    if (cfg.epochs == 0) return out;

    std::vector<AdamState> opt_f, opt_i;
    for (const auto& b : out.forward.blocks()) opt_f.emplace_back(b, cfg.lr);
    for (const auto& b : out.inverse.blocks()) opt_i.emplace_back(b, cfg.lr);

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    // A batch of one has no spread to standardize with.
    const std::size_t bs = std::max<std::size_t>(2, std::min(cfg.batch_size, N));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(cfg, epoch);
        for (auto& o : opt_f) o.lr = lr;
        for (auto& o : opt_i) o.lr = lr;
        std::shuffle(order.begin(), order.end(), rng);
        double sf = 0.0, si = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < N; start += bs) {
            std::size_t B = std::min(bs, N - start);
            if (B < 2) break;
            const Matrix zi = gather(image_latents, order, start, B);
            const Matrix zs = gather(sinogram_latents, order, start, B);
            sf += fit_batch(out.forward, opt_f, zi, zs);
            si += fit_batch(out.inverse, opt_i, zs, zi);
            ++batches;
        }
        if (!std::isfinite(sf) || !std::isfinite(si)) {
            std::ostringstream msg;
            msg << "bridge training diverged at epoch " << epoch;
            throw DivergenceError(msg.str());
        }
        BridgeEpoch rec{epoch, batches ? sf / batches : 0.0, batches ? si / batches : 0.0};
        out.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    out.forward.freeze(image_latents);
    out.inverse.freeze(sinogram_latents);
    return out;
}

BridgeTraining train_bridge(const Matrix& images, const Matrix& sinograms, const VaeModel& w_images,
                            const VaeModel& w_sinograms, const BridgeConfig& cfg, const BridgeCallback& on_epoch) {
    if (images.rows() != sinograms.rows()) throw DimensionError("images and sinograms must be paired");
    if (w_images.latent_dim() != w_sinograms.latent_dim())
        throw DimensionError("embedders must share the latent dimension");
    return train_bridge_latents(w_images.encode_mean_batch(images), w_sinograms.encode_mean_batch(sinograms), cfg,
                                on_epoch);
}

void BridgePipeline::validate() const {
    const std::size_t m = w_images.latent_dim();
    if (w_sinograms.latent_dim() != m) throw DimensionError("embedders must share the latent dimension");
    if (r_fwd.dim() != m || r_inv.dim() != m) throw DimensionError("bridge nets must act on the latent space");
}

std::vector<double> reconstruct_image(const BridgePipeline& p, std::span<const double> x) {
    auto y = p.w_images.decode(p.r_inv.forward(p.r_fwd.forward(p.w_images.encode_mean(x))));
    for (double& v : y) v = std::clamp(v, 0.0, 1.0);
    return y;
}

Matrix reconstruct_images(const BridgePipeline& p, const Matrix& x) {
    Matrix y = p.w_images.decode_batch(p.r_inv.forward_batch(p.r_fwd.forward_batch(p.w_images.encode_mean_batch(x))));
    for (double& v : y.values()) v = std::clamp(v, 0.0, 1.0);
    return y;
}

std::vector<double> sinogram_from_image_latent(const BridgePipeline& p, std::span<const double> x) {
    return p.w_sinograms.decode(p.r_fwd.forward(p.w_images.encode_mean(x)));
}

Container save_bridge_net(const BridgeNet& net) {
    Container c("bridge_net");
    c.set("n_blocks", net.blocks().size());
    for (std::size_t b = 0; b < net.blocks().size(); ++b) c.embed("block" + std::to_string(b), save_mlp(net.blocks()[b]));
    for (std::size_t b = 0; b < net.norms().size(); ++b) {
        c.add_block("norm" + std::to_string(b) + ".mean", net.norms()[b].mean);
        c.add_block("norm" + std::to_string(b) + ".scale", net.norms()[b].scale);
    }
    return c;
}

BridgeNet load_bridge_net(const Container& c) {
    if (c.kind() != "bridge_net") throw FormatError("expected a bridge_net container, got " + c.kind());
    const std::size_t n = c.get_size("n_blocks");
    if (n == 0) throw FormatError("bridge net without blocks");
    std::vector<MlpNet> blocks;
    std::vector<Standardization> norms;
    for (std::size_t b = 0; b < n; ++b) blocks.push_back(load_mlp(c.extract("block" + std::to_string(b))));
    for (std::size_t b = 0; b + 1 < n; ++b)
        norms.push_back({c.block("norm" + std::to_string(b) + ".mean"), c.block("norm" + std::to_string(b) + ".scale")});
    try {
        return BridgeNet(std::move(blocks), std::move(norms));
    } catch (const DimensionError& e) {
        throw FormatError(std::string("inconsistent bridge net: ") + e.what());
    }
}

Container save_pipeline(const BridgePipeline& p) {
    p.validate();
    Container c("bridge_pipeline");
    c.set("latent_dim", p.latent_dim());
    c.embed("w_images", save_vae(p.w_images));
    c.embed("w_sinograms", save_vae(p.w_sinograms));
    c.embed("r_fwd", save_bridge_net(p.r_fwd));
    c.embed("r_inv", save_bridge_net(p.r_inv));
    return c;
}

BridgePipeline load_pipeline(const Container& c) {
    if (c.kind() != "bridge_pipeline") throw FormatError("expected a bridge_pipeline container, got " + c.kind());
    BridgePipeline p{load_vae(c.extract("w_images")), load_vae(c.extract("w_sinograms")),
                     load_bridge_net(c.extract("r_fwd")), load_bridge_net(c.extract("r_inv"))};
    try {
        p.validate();
    } catch (const DimensionError& e) {
        throw FormatError(std::string("inconsistent pipeline: ") + e.what());
    }
    if (c.get_size("latent_dim") != p.latent_dim()) throw FormatError("pipeline latent_dim mismatch");
    return p;
}

}  // namespace manid
