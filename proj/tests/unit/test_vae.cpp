#include <doctest.h>

#include <cmath>

#include "manid/data.hpp"
#include "manid/errors.hpp"
#include "manid/vae.hpp"
#include "support.hpp"

using namespace manid;

namespace {

// Encoder with zero weights emits (mu, log sigma^2) = its bias; decoder with
// zero weights emits its bias, so reconstruction is exact for x = bias.
VaeModel constant_model(std::vector<double> x, std::vector<double> mu, std::vector<double> lv) {
    const std::size_t D = x.size(), m = mu.size();
    DenseLayer e;
    e.weight = Matrix(2 * m, D);
    e.bias = mu;
    e.bias.insert(e.bias.end(), lv.begin(), lv.end());
    DenseLayer d;
    d.weight = Matrix(D, m);
    d.bias = std::move(x);
    return VaeModel(MlpNet({e}), MlpNet({d}));
}

VaeModel small_model(Rng& rng, std::size_t D, std::size_t m, Activation out = Activation::linear) {
    VaeArchitecture a;
    a.ambient_dim = D;
    a.latent_dim = m;
    a.encoder_hidden = {6};
    a.decoder_hidden = {5};
    a.hidden = Activation::tanh;
    a.decoder_output = out;
    VaeModel v = VaeModel::create(a, rng);
    for (auto* net : {&v.encoder(), &v.decoder()})
        for (auto& L : net->layers())
            for (double& b : L.bias) b = std::normal_distribution<double>(0, 0.2)(rng);
    return v;
}

double param(VaeModel& m, int which, std::size_t l, std::size_t k, bool bias, double* set = nullptr) {
    MlpNet& net = which == 0 ? m.encoder() : m.decoder();
    double& ref = bias ? net.layer(l).bias[k] : net.layer(l).weight.data()[k];
    if (set) ref = *set;
    return ref;
}

}  // namespace

TEST_CASE("tanimoto examples and edge cases") {
    CHECK(tanimoto(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(tanimoto(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
    CHECK(tanimoto(std::vector<double>{1, 1}, std::vector<double>{1, 0}) == doctest::Approx(0.5));
    CHECK(tanimoto(std::vector<double>{0, 0}, std::vector<double>{0, 0}) == 0.0);
    CHECK_THROWS_AS(tanimoto(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("tanimoto is symmetric, in [0, 1], and zero only on the diagonal") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(8), y(8);
        for (auto& v : x) v = u(rng);
        for (auto& v : y) v = u(rng);
        const double a = tanimoto(x, y), b = tanimoto(y, x);
        CHECK(a == doctest::Approx(b).epsilon(1e-14));
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        CHECK(a > 0.0);
        CHECK(tanimoto(x, x) == doctest::Approx(0.0).scale(1.0));
    }
}

TEST_CASE("tanimoto bound check") {
    const std::vector<double> x(4, 1.0), z(4, 0.0);
    CHECK(tanimoto_bound_check(x, x, 2));
    CHECK(tanimoto(x, z) == 1.0);
    CHECK(tanimoto_bound_check(x, z, 2));
    Rng rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    const std::size_t D = 16;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> a(D * D), b(D * D);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng) * u(rng);
        CHECK(tanimoto_bound_check(a, b, D));
    }
}

TEST_CASE("closed-form KL") {
    CHECK(kl_standard_normal(std::vector<double>{0, 0}, std::vector<double>{0, 0}) == 0.0);
    CHECK(kl_standard_normal(std::vector<double>{1}, std::vector<double>{0}) == doctest::Approx(0.5));
    const double lv = 0.7;
    CHECK(kl_standard_normal(std::vector<double>{0}, std::vector<double>{lv}) ==
          doctest::Approx(0.5 * (std::exp(lv) - 1 - lv)));
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto mu = testing::random_vector(3, rng), v = testing::random_vector(3, rng);
        CHECK(kl_standard_normal(mu, v) >= 0.0);
    }
}

TEST_CASE("elbo examples") {
    const std::vector<double> x{0.2, -0.4, 1.0};
    const std::vector<double> noise{0.3};
    const VaeModel zero = constant_model(x, {0.0}, {0.0});
    CHECK(elbo_loss(zero, x, 1.0, std::vector<double>{0.0}).total == 0.0);
    const VaeModel one = constant_model(x, {1.0}, {0.0});
    CHECK(elbo_loss(one, x, 1.0, noise).total == doctest::Approx(0.5));

    Rng rng(4);
    const VaeModel m = small_model(rng, 3, 2);
    const std::vector<double> n2{0.1, -0.2};
    const auto a = elbo_loss(m, x, 1.0, n2), b = elbo_loss(m, x, 2.0, n2), c = elbo_loss(m, x, 0.0, n2);
    CHECK(a.reconstruction == b.reconstruction);
    CHECK(c.total == c.reconstruction);
    CHECK(b.total == doctest::Approx(b.reconstruction + 2.0 * b.kl));
    const auto w = elbo_loss(m, x, 0.0, n2, 3.0);
    CHECK(w.reconstruction == doctest::Approx(3.0 * c.reconstruction));
}

TEST_CASE("embedding loss examples") {
    const std::vector<double> x{0.2, 0.4, 1.0};
    TrainConfig cfg;
    cfg.loss = LossKind::embedding_tanimoto;
    cfg.alpha = 18.0;
    cfg.beta = 25.0;
    cfg.gamma = 0.0;
    const VaeModel perfect = constant_model(x, {0.0}, {0.0});
    CHECK(embedding_loss(perfect, x, cfg, std::vector<double>{0.0}).total == 0.0);
    // all-zero weights: the Lasso term is zero even for gamma > 0
    cfg.gamma = 0.5;
    CHECK(embedding_loss(perfect, x, cfg, std::vector<double>{0.0}).lasso == 0.0);

    const auto d = TrainConfig::embedding_defaults(128);
    CHECK(d.alpha == 2.0 * 128 * 128);
    CHECK(d.beta == 25.0);
    CHECK(d.gamma == 1e-4);
    CHECK(d.loss == LossKind::embedding_tanimoto);

    Rng rng(5);
    const VaeModel m = small_model(rng, 3, 2, Activation::sigmoid);
    cfg.gamma = 1e-3;
    const std::vector<double> n2{0.4, 0.1};
    const auto t = embedding_loss(m, x, cfg, n2);
    CHECK(t.lasso == doctest::Approx(1e-3 * (m.encoder().l1_weight_norm() + m.decoder().l1_weight_norm())));
    const auto xhat = m.decoder().forward([&] {
        const auto e = m.encoder().forward(x);
        return std::vector<double>{e[0] + std::exp(0.5 * e[2]) * n2[0], e[1] + std::exp(0.5 * e[3]) * n2[1]};
    }());
    CHECK(t.reconstruction == doctest::Approx(0.5 * cfg.alpha * tanimoto(xhat, x)));
    CHECK(t.total == doctest::Approx(t.reconstruction + cfg.beta * t.kl + t.lasso));
}

TEST_CASE("batch loss gradients match finite differences for both loss kinds") {
    Rng rng(6);
    for (LossKind kind : {LossKind::elbo_l2, LossKind::embedding_tanimoto}) {
        VaeModel m = small_model(rng, 4, 2, kind == LossKind::elbo_l2 ? Activation::linear : Activation::sigmoid);
        Matrix x(3, 4);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (double& v : x.values()) v = u(rng);
        const Matrix noise = testing::random_matrix(3, 2, rng);
        TrainConfig cfg;
        cfg.loss = kind;
        cfg.alpha = 7.0;
        cfg.beta = 0.7;
        cfg.gamma = 1e-3;
        cfg.recon_weight = 2.0;
        VaeGradients g;
        batch_loss(m, x, noise, cfg, &g);
        const double h = 1e-6;
        double worst = 0;
        for (int which = 0; which < 2; ++which) {
            const MlpNet& net = which == 0 ? m.encoder() : m.decoder();
            const NetGradients& ng = which == 0 ? g.encoder : g.decoder;
            for (std::size_t l = 0; l < net.depth(); ++l)
                for (int b = 0; b < 2; ++b) {
                    const std::size_t count = b ? net.layer(l).bias.size() : net.layer(l).weight.size();
                    for (std::size_t k = 0; k < count; ++k) {
                        const double p0 = param(m, which, l, k, b);
                        double v = p0 + h;
                        param(m, which, l, k, b, &v);
                        const double lp = batch_loss(m, x, noise, cfg, nullptr).total;
                        v = p0 - h;
                        param(m, which, l, k, b, &v);
                        const double lm = batch_loss(m, x, noise, cfg, nullptr).total;
                        param(m, which, l, k, b, const_cast<double*>(&p0));
                        const double fd = (lp - lm) / (2 * h);
                        const double an = b ? ng.layers[l].bias[k] : ng.layers[l].weight.data()[k];
                        worst = std::max(worst, std::abs(an - fd) / std::max(1e-2, std::abs(fd)));
                    }
                }
        }
        CAPTURE(to_string(kind));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("model shape invariants and mean head") {
    Rng rng(7);
    const VaeModel m = small_model(rng, 5, 3);
    CHECK(m.latent_dim() == 3);
    CHECK(m.ambient_dim() == 5);
    CHECK(m.encoder().output_dim() == 6);
    const auto x = testing::random_vector(5, rng);
    const auto mu = m.encode_mean(x);
    const auto full = m.encoder().forward(x);
    for (std::size_t j = 0; j < 3; ++j) CHECK(mu[j] == full[j]);
    CHECK(m.reconstruct(x) == m.decode(mu));
    const Matrix xb(2, 5, std::vector<double>(10, 0.3));
    CHECK(m.reconstruct_batch(xb).rows() == 2);

    MlpNet bad_enc = MlpNet::random({{5, 5}}, rng);
    MlpNet dec = MlpNet::random({{3, 5}}, rng);
    CHECK_THROWS_AS(VaeModel(bad_enc, dec), DimensionError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.validate();
    c.alpha = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.beta = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.gamma = -1e-3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(loss_kind_from_string(to_string(LossKind::embedding_tanimoto)) == LossKind::embedding_tanimoto);
    CHECK(lasso_step_from_string(to_string(LassoStep::proximal)) == LassoStep::proximal);
    CHECK_THROWS_AS(loss_kind_from_string("mse"), ConfigError);
}

TEST_CASE("zero-epoch training on one point returns the initialised model") {
    VaeArchitecture a;
    a.ambient_dim = 2;
    a.latent_dim = 1;
    a.encoder_hidden = {4};
    a.decoder_hidden = {4};
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    const Matrix one{{0.5, -0.5}};
    const VaeModel m = train_vae(one, a, cfg);
    Rng rng(9);
    const VaeModel fresh = VaeModel::create(a, rng);
    CHECK(m.encoder() == fresh.encoder());
    CHECK(m.decoder() == fresh.decoder());
    CHECK(m.trace.empty());
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto ds = gen_circle(200, 3);
    VaeArchitecture a;
    a.ambient_dim = 2;
    a.latent_dim = 3;
    a.encoder_hidden = {16};
    a.decoder_hidden = {16};
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 4;
    cfg.batch_size = 32;
    const VaeModel m1 = train_vae(ds.samples, a, cfg);
    const VaeModel m2 = train_vae(ds.samples, a, cfg);
    CHECK(loss_trace_csv(m1.trace) == loss_trace_csv(m2.trace));
    CHECK(m1.encoder() == m2.encoder());
    REQUIRE(m1.trace.size() == 20);
    CHECK(m1.trace.back().terms.total < m1.trace.front().terms.total);

    cfg.seed = 5;
    const VaeModel m3 = train_vae(ds.samples, a, cfg);
    CHECK_FALSE(m3.encoder() == m1.encoder());

    // continuing from a model appends to its trace
    cfg.epochs = 2;
    const VaeModel m4 = train_vae(ds.samples, m1, cfg);
    CHECK(m4.trace.size() == m1.trace.size() + 2);
}

TEST_CASE("proximal lasso training produces exactly zero weights") {
    const auto ds = gen_circle(200, 6);
    VaeArchitecture a;
    a.ambient_dim = 2;
    a.latent_dim = 3;
    a.encoder_hidden = {16};
    a.decoder_hidden = {16};
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.gamma = 1e-2;
    cfg.lasso_step = LassoStep::proximal;
    const VaeModel m = train_vae(ds.samples, a, cfg);
    std::size_t zeros = 0;
    for (const auto* net : {&m.encoder(), &m.decoder()})
        for (const auto& L : net->layers())
            for (double w : L.weight.values()) zeros += w == 0.0;
    CHECK(zeros > 0);
}

TEST_CASE("divergence aborts with a diagnostic") {
    Matrix huge(4, 2, 1e200);
    VaeArchitecture a;
    a.ambient_dim = 2;
    a.latent_dim = 1;
    a.encoder_hidden = {3};
    a.decoder_hidden = {3};
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.jitter = 0.0;
    CHECK_THROWS_AS(train_vae(huge, a, cfg), DivergenceError);
    CHECK_THROWS_AS(train_vae(Matrix(0, 2), a, cfg), DimensionError);
}

TEST_CASE("checkpoint and trace CSV round-trip") {
    const auto ds = gen_circle(64, 7);
    VaeArchitecture a;
    a.ambient_dim = 2;
    a.latent_dim = 2;
    a.encoder_hidden = {8};
    a.decoder_hidden = {8};
    a.decoder_output = Activation::sigmoid;
    TrainConfig cfg;
    cfg.epochs = 3;
    const VaeModel m = train_vae(ds.samples, a, cfg);
    const VaeModel back = load_vae(Container::from_bytes(save_vae(m).to_bytes()));
    CHECK(back.encoder() == m.encoder());
    CHECK(back.decoder() == m.decoder());
    CHECK(loss_trace_csv(back.trace) == loss_trace_csv(m.trace));
    const std::string csv = loss_trace_csv(m.trace);
    CHECK(csv.rfind("epoch,total,reconstruction,kl,lasso\n", 0) == 0);
    CHECK(mean_squared_error(m, ds.samples) == doctest::Approx(mean_reconstruction_error(m, ds.samples)));
}
