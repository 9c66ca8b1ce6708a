#include <doctest.h>

#include <cmath>

#include "manid/errors.hpp"
#include "manid/geometry.hpp"
#include "support.hpp"

using namespace manid;

namespace {

// F(x, y) = (-x - y, x + y, (x + y)^3)
Matrix example_jacobian(std::span<const double> p) {
    const double s = p[0] + p[1], d = 3 * s * s;
    return Matrix{{-1, -1}, {1, 1}, {d, d}};
}

std::vector<double> example_map(std::span<const double> p) {
    const double s = p[0] + p[1];
    return {-s, s, s * s * s};
}

VaeModel linear_vae(const Matrix& b, const Matrix& a) {
    DenseLayer e;
    e.weight = Matrix(2 * b.rows(), b.cols());
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) e.weight(i, j) = b(i, j);
    e.bias.assign(2 * b.rows(), 0.0);
    DenseLayer d;
    d.weight = a;
    d.bias.assign(a.rows(), 0.0);
    return VaeModel(MlpNet({e}), MlpNet({d}));
}

}  // namespace

TEST_CASE("closed-form pullback example on a 21 x 21 grid") {
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const std::vector<double> p{-1 + 0.1 * i, -1 + 0.1 * j};
            const double s = p[0] + p[1], c = 2 + 9 * std::pow(s, 4);
            const Matrix g = pullback_metric(JacobianFn(example_jacobian), p);
            CHECK(max_abs_diff(g, Matrix{{c, c}, {c, c}}) <= 1e-8 * std::max(1.0, c));
            const auto ev = sym_eigvals(g);
            CHECK(std::abs(ev.values[0] - (4 + 18 * std::pow(s, 4))) <= 1e-8 * std::max(1.0, ev.values[0]));
            CHECK(std::abs(ev.values[1]) <= 1e-8);
        }
    const Matrix g0 = pullback_metric(JacobianFn(example_jacobian), std::vector<double>{0, 0});
    CHECK(g0 == Matrix{{2, 2}, {2, 2}});
    // the closed-form Jacobian is the derivative of the map itself
    const std::vector<double> p{0.3, -0.1};
    CHECK(max_abs_diff(testing::fd_jacobian(example_map, p), example_jacobian(p)) < 1e-8);
}

TEST_CASE("pullback of the identity and with an ambient metric") {
    CHECK(pullback_metric(Matrix::identity(3)) == Matrix::identity(3));
    const Matrix j{{1, 0}, {0, 1}, {1, 1}};
    const Matrix h = Matrix::diagonal(std::vector<double>{2, 3, 4});
    const Matrix g = pullback_metric(j, h);
    CHECK(g == Matrix{{6, 4}, {4, 7}});
    CHECK_THROWS_AS(pullback_metric(j, Matrix::identity(2)), DimensionError);
}

TEST_CASE("pullback of a random net matches the finite-difference Jacobian product, is symmetric PSD") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const MlpNet net = MlpNet::random({{3, 8, 5}, Activation::tanh, Activation::linear}, rng);
        const auto x = testing::random_vector(3, rng);
        const Matrix fd = testing::fd_jacobian([&](std::span<const double> p) { return net.forward(p); }, x);
        const Matrix g = pullback_metric(net, x);
        CHECK(max_abs_diff(g, matmul_tn(fd, fd)) < 1e-5 * std::max(1.0, g.frobenius_norm()));
        CHECK(max_abs_diff(g, g.transposed()) == 0.0);
        CHECK(sym_eigvals(g).values.back() >= -1e-10 * g.frobenius_norm());
    }
}

TEST_CASE("encoder Gram examples") {
    Rng rng(2);
    const Matrix b = testing::random_matrix(2, 4, rng), a = testing::random_matrix(4, 2, rng);
    const VaeModel lin = linear_vae(b, a);
    const auto x = testing::random_vector(4, rng);
    CHECK(max_abs_diff(encoder_gram(lin, x), matmul_nt(b, b)) < 1e-14);
    CHECK(max_abs_diff(decoder_metric(lin, std::vector<double>{0.1, 0.2}), matmul_tn(a, a)) < 1e-14);

    // latent coordinate 2 ignores x
    Matrix b3(3, 4);
    for (std::size_t j = 0; j < 4; ++j) b3(0, j) = b(0, j), b3(1, j) = b(1, j);
    const VaeModel unused = linear_vae(b3, testing::random_matrix(4, 3, rng));
    const Matrix g = encoder_gram(unused, x);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g(2, k) == 0.0);
    CHECK(sym_eigvals(g).values[2] == doctest::Approx(0.0).scale(1.0));

    VaeArchitecture arch;
    arch.ambient_dim = 5;
    arch.latent_dim = 3;
    arch.encoder_hidden = {7};
    arch.decoder_hidden = {7};
    arch.hidden = Activation::tanh;
    const VaeModel net = VaeModel::create(arch, rng);
    const auto y = testing::random_vector(5, rng);
    const Matrix fd = testing::fd_jacobian([&](std::span<const double> p) { return net.encode_mean(p); }, y);
    CHECK(max_abs_diff(encoder_mean_jacobian(net, y), fd) < 1e-8);
    CHECK(max_abs_diff(encoder_gram(net, y), matmul_nt(fd, fd)) < 1e-7);
}

TEST_CASE("metric report sorts the spectrum") {
    const auto r = metric_report(std::vector<double>{1, 2}, Matrix{{1, 0}, {0, 5}});
    CHECK(r.spectrum.values == std::vector<double>{5, 1});
    CHECK(r.point == std::vector<double>{1, 2});
}

TEST_CASE("duality examples") {
    const Matrix a{{2}, {0}, {0}};
    const Matrix b = pseudoinverse(a);
    const auto r = duality_check(a, b);
    CHECK(r.max_error < 1e-12);
    CHECK(matmul_tn(a, a) == Matrix{{4}});

    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + rng() % 9, m = 1 + rng() % std::min<std::size_t>(5, n);
        const Matrix A = testing::random_matrix(n, m, rng);
        const auto ok = duality_check(A, pseudoinverse(A));
        CHECK(ok.encoder_full_row_rank);
        CHECK(ok.max_error < 1e-8);
    }

    // B = A^+ + N with N A = 0 is still a left inverse but not the pseudoinverse
    const Matrix A = testing::random_matrix(6, 2, rng);
    const Matrix P = pseudoinverse(A);
    const Matrix proj = Matrix::identity(6) - matmul(A, P);
    const Matrix B = P + matmul(testing::random_matrix(2, 6, rng), proj);
    CHECK(max_abs_diff(matmul(B, A), Matrix::identity(2)) < 1e-10);
    CHECK(duality_check(A, B).max_error > 0.1);

    const auto deficient = duality_check(testing::random_matrix(4, 2, rng), Matrix(2, 4));
    CHECK_FALSE(deficient.encoder_full_row_rank);
    CHECK_THROWS_AS(duality_check(Matrix(4, 2), Matrix(3, 4)), DimensionError);
}

TEST_CASE("gap rule examples") {
    const auto e = estimate_id({Spectrum({5.0, 3.0, 2.9e-9, 1e-10})});
    CHECK(e.id == 2);
    CHECK(e.gap_index == 2);
    CHECK_FALSE(e.no_gap);
    CHECK(e.gap_ratio == doctest::Approx(3.0 / 2.9e-9));

    const auto none = estimate_id({Spectrum({5.0, 3.0, 1.0})});
    CHECK(none.no_gap);
    CHECK(none.id == 3);

    // a large ratio above the floor is not a gap
    CHECK(estimate_id({Spectrum({1.0, 1e-4, 1e-8})}).id == 2);
    // negatives count as null
    const auto neg = estimate_id({Spectrum({4.0, -1e-3, -2.0})});
    CHECK(neg.id == 1);
    CHECK(neg.mean_spectrum.values[1] == 0.0);

    CHECK_THROWS_AS(estimate_id({}), DimensionError);
    CHECK_THROWS_AS(estimate_id({Spectrum({1.0, 0.0}), Spectrum({1.0})}), DimensionError);
    CHECK_THROWS_AS(estimate_id({Spectrum({1.0})}, 1.0), ConfigError);
}

TEST_CASE("gap rule uses the element-wise mean spectrum and records per-sample ids") {
    const auto e = estimate_id({Spectrum({2.0, 1e-12}), Spectrum({4.0, 1.0})});
    CHECK(e.mean_spectrum.values[0] == 3.0);
    CHECK(e.no_gap);
    CHECK(e.per_sample_ids == std::vector<std::size_t>{1, 2});
}

TEST_CASE("gap rule is scale invariant and monotone in rho") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(-14, 1);
    for (int t = 0; t < 300; ++t) {
        std::vector<Spectrum> s;
        for (int k = 0; k < 3; ++k) {
            std::vector<double> v(6);
            for (double& x : v) x = std::pow(10.0, u(rng));
            s.emplace_back(v);
        }
        const auto base = estimate_id(s);
        for (double c : {1e-6, 0.5, 3.0, 1e8}) {
            std::vector<Spectrum> scaled;
            for (const auto& sp : s) {
                std::vector<double> v = sp.values;
                for (double& x : v) x *= c;
                scaled.emplace_back(v);
            }
            CHECK(estimate_id(scaled).id == base.id);
        }
        std::size_t prev = 0;
        for (double rho : {10.0, 1e2, 1e3, 1e5, 1e8}) {
            const std::size_t id = estimate_id(s, rho).id;
            CHECK(id >= prev);
            prev = id;
        }
    }
}

TEST_CASE("dataset_id on linear models and degenerate data") {
    Rng rng(5);
    Matrix b = testing::random_matrix(3, 5, rng);
    for (std::size_t j = 0; j < 5; ++j) b(2, j) = 0.0;  // one unused latent axis
    const VaeModel lin = linear_vae(b, testing::random_matrix(5, 3, rng));
    const Matrix x = testing::random_matrix(50, 5, rng);
    IdConfig cfg;
    cfg.sample_size = 20;
    const auto e = dataset_id(lin, x, cfg);
    CHECK(e.id == 2);
    CHECK(e.spectra.size() == 20);
    CHECK(dataset_id(lin, x, cfg).mean_spectrum.values == e.mean_spectrum.values);
    CHECK(subsample_indices(50, 20, 1) == subsample_indices(50, 20, 1));
    CHECK(subsample_indices(50, 20, 1) != subsample_indices(50, 20, 2));
    const auto all = subsample_indices(10, 50, 1);
    CHECK(all.size() == 10);

    // one repeated point: every spectrum identical, the call still returns an estimate
    const Matrix same(30, 5, 0.25);
    const auto d = dataset_id(lin, same, cfg);
    CHECK((d.no_gap || d.id <= 3));
    CHECK_THROWS_AS(dataset_id(lin, Matrix(0, 5), cfg), DimensionError);
    CHECK_THROWS_AS(dataset_id(lin, Matrix(3, 4), cfg), DimensionError);

    cfg.sample_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("spectrum csv and report formats") {
    const auto e = estimate_id({Spectrum({5.0, 1e-9}), Spectrum({3.0, 1e-9})});
    const std::string csv = spectrum_csv(e);
    CHECK(csv.rfind("sample_index,lambda_1,lambda_2\n0,5,1e-09\n1,3,1e-09\nmean,4,1e-09", 0) == 0);
    const std::string rep = id_report(e);
    CHECK(rep.find("id=1\n") != std::string::npos);
    CHECK(rep.find("no_gap=0\n") != std::string::npos);
    CHECK(metric_side_from_string(to_string(MetricSide::decoder_pullback)) == MetricSide::decoder_pullback);
}
