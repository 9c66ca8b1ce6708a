#include "manid/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "manid/errors.hpp"
#include "manid/kernels.hpp"

namespace manid {

std::string to_string(LossKind k) {
    return k == LossKind::elbo_l2 ? "elbo_l2" : "embedding_tanimoto";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "elbo_l2") return LossKind::elbo_l2;
    if (s == "embedding_tanimoto") return LossKind::embedding_tanimoto;
    throw ConfigError("unknown loss kind '" + s + "'");
}

std::string to_string(LassoStep s) { return s == LassoStep::proximal ? "proximal" : "subgradient"; }

LassoStep lasso_step_from_string(const std::string& s) {
    if (s == "subgradient") return LassoStep::subgradient;
    if (s == "proximal") return LassoStep::proximal;
    throw ConfigError("unknown lasso step '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    if (!(recon_weight > 0.0)) throw ConfigError("recon_weight must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(lr > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(jitter >= 0.0)) throw ConfigError("jitter must be non-negative");
}

TrainConfig TrainConfig::embedding_defaults(std::size_t image_side) {
    TrainConfig c;
    c.loss = LossKind::embedding_tanimoto;
    c.alpha = 2.0 * static_cast<double>(image_side * image_side);
    c.beta = 25.0;
    c.gamma = 1e-4;
    return c;
}

VaeModel::VaeModel(MlpNet encoder, MlpNet decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    latent_dim_ = decoder_.input_dim();
    ambient_dim_ = decoder_.output_dim();
    if (encoder_.output_dim() != 2 * latent_dim_)
        throw DimensionError("encoder must emit 2m outputs (mean and log-variance)");
    if (encoder_.input_dim() != ambient_dim_)
        throw DimensionError("encoder input does not match decoder output");
}

VaeModel VaeModel::create(const VaeArchitecture& arch, Rng& rng) {
    if (arch.ambient_dim == 0 || arch.latent_dim == 0) throw ConfigError("VAE dims must be positive");
    MlpNet::Spec es;
    es.sizes.push_back(arch.ambient_dim);
    es.sizes.insert(es.sizes.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
    es.sizes.push_back(2 * arch.latent_dim);
    es.hidden = arch.hidden;
    es.output = Activation::linear;
    es.slope = arch.slope;
    MlpNet::Spec ds;
    ds.sizes.push_back(arch.latent_dim);
    ds.sizes.insert(ds.sizes.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
    ds.sizes.push_back(arch.ambient_dim);
    ds.hidden = arch.hidden;
    ds.output = arch.decoder_output;
    ds.slope = arch.slope;
    MlpNet enc = MlpNet::random(es, rng);
    MlpNet dec = MlpNet::random(ds, rng);
    return VaeModel(std::move(enc), std::move(dec));
}

std::vector<double> VaeModel::encode_mean(std::span<const double> x) const {
    std::vector<double> out = encoder_.forward(x);
    out.resize(latent_dim_);
    return out;
}

std::vector<double> VaeModel::decode(std::span<const double> z) const { return decoder_.forward(z); }

std::vector<double> VaeModel::reconstruct(std::span<const double> x) const {
    return decode(encode_mean(x));
}

Matrix VaeModel::encode_mean_batch(const Matrix& x) const {
    const Matrix out = encoder_.forward_batch(x);
    Matrix mu(x.rows(), latent_dim_);
    for (std::size_t i = 0; i < x.rows(); ++i)
        std::copy_n(out.row(i).data(), latent_dim_, mu.row(i).data());
    return mu;
}

Matrix VaeModel::decode_batch(const Matrix& z) const { return decoder_.forward_batch(z); }

Matrix VaeModel::reconstruct_batch(const Matrix& x) const { return decode_batch(encode_mean_batch(x)); }

double kl_standard_normal(std::span<const double> mu, std::span<const double> logvar) {
    if (mu.size() != logvar.size()) throw DimensionError("kl: mean/log-variance length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        kl += mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i];
    return 0.5 * kl;
}

double tanimoto(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("tanimoto: length mismatch");
    const auto& k = kernels::active();
    const double p = k.dot(x.data(), y.data(), x.size());
    const double q = k.dot(x.data(), x.data(), x.size()) + k.dot(y.data(), y.data(), y.size()) - p;
    if (q == 0.0) return 0.0;
    return 1.0 - p / q;
}

bool tanimoto_bound_check(std::span<const double> x, std::span<const double> y,
                          std::size_t image_side) {
    if (x.size() != y.size()) throw DimensionError("tanimoto_bound_check: length mismatch");
    const double t = tanimoto(x, y);
    if (t >= 1.0) return true;
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    const double D2 = static_cast<double>(image_side * image_side);
    // Relative slack for roundoff when both sides vanish together.
    return d2 <= 2.0 * D2 * t / (1.0 - t) * (1.0 + 1e-12) + 1e-15;
}

namespace {

// d T(a, b) / d a, with T(0, 0) treated as flat.
void tanimoto_grad(std::span<const double> a, std::span<const double> b, double scale,
                   double* out) {
    const auto& k = kernels::active();
    const double p = k.dot(a.data(), b.data(), a.size());
    const double q = k.dot(a.data(), a.data(), a.size()) + k.dot(b.data(), b.data(), b.size()) - p;
    if (q == 0.0) {
        std::fill(out, out + a.size(), 0.0);
        return;
    }
    const double inv_q2 = scale / (q * q);
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = -(b[i] * q - p * (2.0 * a[i] - b[i])) * inv_q2;
}

double total_l1(const VaeModel& m) { return m.encoder().l1_weight_norm() + m.decoder().l1_weight_norm(); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void add_lasso_grad(const MlpNet& net, double gamma, NetGradients& g) {
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const DenseLayer& L = net.layer(l);
        const double* mask = L.mask ? L.mask->data() : nullptr;
        double* gw = g.layers[l].weight.data();
        for (std::size_t i = 0; i < L.weight.size(); ++i)
            if (!mask || mask[i] != 0.0) gw[i] += gamma * sign(L.weight.data()[i]);
    }
}

LossTerms single_sample(const VaeModel& model, std::span<const double> x, const TrainConfig& cfg,
                        std::span<const double> noise) {
    if (x.size() != model.ambient_dim()) throw DimensionError("loss: sample length mismatch");
    if (noise.size() != model.latent_dim()) throw DimensionError("loss: noise length mismatch");
    Matrix xm(1, x.size(), std::vector<double>(x.begin(), x.end()));
    Matrix nm(1, noise.size(), std::vector<double>(noise.begin(), noise.end()));
    return batch_loss(model, xm, nm, cfg, nullptr);
}

}  // namespace

LossTerms elbo_loss(const VaeModel& model, std::span<const double> x, double beta,
                    std::span<const double> noise, double recon_weight) {
    TrainConfig cfg;
    cfg.loss = LossKind::elbo_l2;
    cfg.beta = beta;
    cfg.recon_weight = recon_weight;
    return single_sample(model, x, cfg, noise);
}

LossTerms embedding_loss(const VaeModel& model, std::span<const double> x, const TrainConfig& cfg,
                         std::span<const double> noise) {
    TrainConfig c = cfg;
    c.loss = LossKind::embedding_tanimoto;
    return single_sample(model, x, c, noise);
}

namespace {

// `target` is what the decoder must reproduce; it may differ from the
// encoder input `x` when the input is jittered.
LossTerms batch_loss_impl(const VaeModel& model, const Matrix& x, const Matrix& target,
                          const Matrix& noise, const TrainConfig& cfg, VaeGradients* grads,
                          bool lasso_grad) {
    const std::size_t B = x.rows(), m = model.latent_dim(), D = model.ambient_dim();
    if (B == 0) throw DimensionError("batch_loss: empty batch");
    if (x.cols() != D) throw DimensionError("batch_loss: sample width mismatch");
    if (noise.rows() != B || noise.cols() != m) throw DimensionError("batch_loss: noise shape mismatch");

    ForwardCache ecache, dcache;
    const bool want = grads != nullptr;
    const Matrix enc = model.encoder().forward_batch(x, want ? &ecache : nullptr);
    Matrix z(B, m);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < m; ++j)
            z(i, j) = enc(i, j) + std::exp(0.5 * enc(i, m + j)) * noise(i, j);
    const Matrix xhat = model.decoder().forward_batch(z, want ? &dcache : nullptr);

    const bool l2 = cfg.loss == LossKind::elbo_l2;
    const double inv_b = 1.0 / static_cast<double>(B);
    LossTerms t;
    Matrix d_xhat(want ? B : 0, want ? D : 0);
    for (std::size_t i = 0; i < B; ++i) {
        const auto xi = target.row(i), yi = xhat.row(i);
        const auto mu = enc.row(i).subspan(0, m), lv = enc.row(i).subspan(m, m);
        double recon = 0.0;
        if (l2) {
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) s += (yi[j] - xi[j]) * (yi[j] - xi[j]);
            recon = 0.5 * cfg.recon_weight * s;
            if (want)
                for (std::size_t j = 0; j < D; ++j)
                    d_xhat(i, j) = cfg.recon_weight * (yi[j] - xi[j]) * inv_b;
        } else {
            recon = 0.5 * cfg.alpha * tanimoto(yi, xi);
            if (want) tanimoto_grad(yi, xi, 0.5 * cfg.alpha * inv_b, d_xhat.row(i).data());
        }
        t.reconstruction += recon;
        t.kl += kl_standard_normal(mu, lv);
    }
    t.reconstruction *= inv_b;
    t.kl *= inv_b;
    if (cfg.gamma > 0.0) t.lasso = cfg.gamma * total_l1(model);
    t.total = t.reconstruction + cfg.beta * t.kl + t.lasso;

    if (want) {
        grads->encoder = model.encoder().zero_gradients();
        grads->decoder = model.decoder().zero_gradients();
        const Matrix dz = model.decoder().backward_batch(dcache, d_xhat, &grads->decoder);
        Matrix d_enc(B, 2 * m);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const double mu = enc(i, j), lv = enc(i, m + j);
                const double sigma = std::exp(0.5 * lv);
                d_enc(i, j) = dz(i, j) + cfg.beta * mu * inv_b;
                d_enc(i, m + j) = dz(i, j) * noise(i, j) * 0.5 * sigma +
                                  cfg.beta * 0.5 * (std::exp(lv) - 1.0) * inv_b;
            }
        model.encoder().backward_batch(ecache, d_enc, &grads->encoder);
        if (cfg.gamma > 0.0 && lasso_grad) {
            add_lasso_grad(model.encoder(), cfg.gamma, grads->encoder);
            add_lasso_grad(model.decoder(), cfg.gamma, grads->decoder);
        }
    }
    return t;
}

}  // namespace

LossTerms batch_loss(const VaeModel& model, const Matrix& x, const Matrix& noise,
                     const TrainConfig& cfg, VaeGradients* grads) {
    return batch_loss_impl(model, x, x, noise, cfg, grads, true);
}

VaeModel train_vae(const Matrix& samples, const VaeArchitecture& arch, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (samples.cols() != arch.ambient_dim) throw DimensionError("train_vae: sample width mismatch");
    Rng init(cfg.seed);
    return train_vae(samples, VaeModel::create(arch, init), cfg, on_epoch);
}

VaeModel train_vae(const Matrix& samples, VaeModel model, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (samples.rows() == 0) throw DimensionError("train_vae: empty dataset");
    if (samples.cols() != model.ambient_dim()) throw DimensionError("train_vae: sample width mismatch");

    const std::size_t N = samples.rows(), D = samples.cols(), m = model.latent_dim();
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> jit(-cfg.jitter, cfg.jitter);
    AdamState enc_opt(model.encoder(), cfg.lr), dec_opt(model.decoder(), cfg.lr);
    const bool proximal = cfg.lasso_step == LassoStep::proximal;
    if (proximal) enc_opt.l1 = dec_opt.l1 = cfg.gamma;
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::min(cfg.batch_size, N);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
        const double lr = cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
        enc_opt.lr = dec_opt.lr = lr;
        std::shuffle(order.begin(), order.end(), rng);

        LossTerms sum;
        for (std::size_t start = 0; start < N; start += bs) {
            const std::size_t B = std::min(bs, N - start);
            Matrix xb(B, D), tb(B, D), nb(B, m);
            for (std::size_t i = 0; i < B; ++i) {
                const auto src = samples.row(order[start + i]);
                auto dst = xb.row(i);
                auto tgt = tb.row(i);
                for (std::size_t j = 0; j < D; ++j) {
                    dst[j] = src[j] + (cfg.jitter > 0.0 ? jit(rng) : 0.0);
                    tgt[j] = cfg.jitter_targets ? dst[j] : src[j];
                }
                for (std::size_t j = 0; j < m; ++j) nb(i, j) = gauss(rng);
            }
            VaeGradients g;
            const LossTerms t = batch_loss_impl(model, xb, tb, nb, cfg, &g, !proximal);
            if (!std::isfinite(t.total)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << " (reconstruction=" << t.reconstruction
                    << ", kl=" << t.kl << ", lasso=" << t.lasso << ")";
                throw DivergenceError(msg.str());
            }
            adam_step(model.encoder(), g.encoder, enc_opt);
            adam_step(model.decoder(), g.decoder, dec_opt);
            const double w = static_cast<double>(B);
            sum.total += t.total * w;
            sum.reconstruction += t.reconstruction * w;
            sum.kl += t.kl * w;
            sum.lasso += t.lasso * w;
        }
        const double inv_n = 1.0 / static_cast<double>(N);
        EpochRecord rec{epoch, {sum.total * inv_n, sum.reconstruction * inv_n, sum.kl * inv_n,
                                sum.lasso * inv_n}};
        model.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return model;
}

double mean_reconstruction_error(const VaeModel& model, const Matrix& samples) {
    const Matrix r = model.reconstruct_batch(samples);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r.data()[i] - samples.data()[i];
        s += d * d;
    }
    return 0.5 * s / static_cast<double>(samples.rows());
}

double mean_squared_error(const VaeModel& model, const Matrix& samples) {
    return 2.0 * mean_reconstruction_error(model, samples) / static_cast<double>(samples.cols());
}

Container save_vae(const VaeModel& model) {
    Container c("vae");
    c.set("latent_dim", model.latent_dim());
    c.set("ambient_dim", model.ambient_dim());
    c.embed("encoder", save_mlp(model.encoder()));
    c.embed("decoder", save_mlp(model.decoder()));
    std::vector<double> trace;
    for (const auto& r : model.trace) {
        trace.push_back(r.epoch);
        trace.push_back(r.terms.total);
        trace.push_back(r.terms.reconstruction);
        trace.push_back(r.terms.kl);
        trace.push_back(r.terms.lasso);
    }
    c.add_block("trace", std::move(trace));
    return c;
}

VaeModel load_vae(const Container& c) {
    if (c.kind() != "vae") throw FormatError("expected a vae checkpoint, got '" + c.kind() + "'");
    VaeModel m(load_mlp(c.extract("encoder")), load_mlp(c.extract("decoder")));
    if (m.latent_dim() != c.get_size("latent_dim") || m.ambient_dim() != c.get_size("ambient_dim"))
        throw FormatError("vae header dims disagree with network shapes");
    if (c.has_block("trace")) {
        const auto& t = c.block("trace");
        if (t.size() % 5 != 0) throw FormatError("malformed vae loss trace");
        for (std::size_t i = 0; i < t.size(); i += 5)
            m.trace.push_back({static_cast<int>(t[i]), {t[i + 1], t[i + 2], t[i + 3], t[i + 4]}});
    }
    return m;
}

std::string loss_trace_csv(const std::vector<EpochRecord>& trace) {
    std::string out = "epoch,total,reconstruction,kl,lasso\n";
    for (const auto& r : trace) {
        out += std::to_string(r.epoch) + ',' + format_exact(r.terms.total) + ',' +
               format_exact(r.terms.reconstruction) + ',' + format_exact(r.terms.kl) + ',' +
               format_exact(r.terms.lasso) + '\n';
    }
    return out;
}

}  // namespace manid
