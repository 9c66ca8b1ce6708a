#include <doctest.h>

#include <cmath>
#include <numeric>

#include "manid/atlas.hpp"
#include "manid/errors.hpp"
#include "support.hpp"

using namespace manid;

namespace {

CouplingStack identity_stack(std::size_t n, Rng& rng) {
    CouplingStack s(std::vector<CouplingBlock>{CouplingBlock::create(n, {4}, rng)});
    auto& b = s.blocks()[0];
    for (MlpNet* net : {&b.a, &b.b, &b.c, &b.d})
        for (auto& l : net->layers()) {
            l.weight = Matrix(l.weight.rows(), l.weight.cols());
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
    return s;
}

/// Two flat blobs around (+c, +c, +c) and (-c, -c, -c), thin along z and x.
Matrix two_blobs(std::size_t n, double c, Rng& rng) {
    std::normal_distribution<double> g(0.0, 2.0);
    Matrix x(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const bool a = i < n / 2;
        for (std::size_t j = 0; j < 3; ++j) {
            const double s = (a ? j == 2 : j == 0) ? 0.025 : 1.0;
            x(i, j) = (a ? c : -c) + s * g(rng);
        }
    }
    return x;
}

AtlasConfig blob_config() {
    AtlasConfig c;
    c.components = 2;
    c.chart_dim = 2;
    c.blocks = 2;
    c.hidden = {16};
    c.epochs = 100;
    c.lr = 1e-2;
    c.lr_final = 1e-4;
    return c;
}

}  // namespace

TEST_CASE("component loss of the identity chart") {
    Rng rng(1);
    const ChartLossParams p{2.0, 0.1, 1.0};
    const auto l = component_losses(identity_stack(3, rng), Matrix{{1, 2, 3}}, 2, p);
    REQUIRE(l.size() == 1);
    CHECK(l[0].reconstruction == doctest::Approx(9.0));
    CHECK(l[0].residual == doctest::Approx(9.0));
    CHECK(l[0].kl == doctest::Approx(2.5));
    CHECK(l[0].total == doctest::Approx(9.0 + 2.0 * 9.0 + 0.1 * 2.5));
}

TEST_CASE("single-component and symmetric atlases") {
    Rng rng(2);
    const MixtureAtlas one({CouplingStack::create(3, 2, {8}, rng)}, {1.0}, 2);
    const Matrix x = testing::random_matrix(20, 3, rng);
    const Matrix r = responsibilities(one, x);
    for (std::size_t i = 0; i < 20; ++i) CHECK(r(i, 0) == 1.0);
    const auto a = assign_chart(one, x.row(0));
    CHECK(a.chart == 0);
    CHECK(a.responsibilities == std::vector<double>{1.0});

    const CouplingStack s = CouplingStack::create(3, 2, {8}, rng);
    const MixtureAtlas twin({s, s}, {1.0, 1.0}, 2);
    const auto t = assign_chart(twin, x.row(4));
    CHECK(t.chart == 0);
    CHECK(t.responsibilities == std::vector<double>{0.5, 0.5});

    AtlasConfig cfg = blob_config();
    cfg.components = 1;
    cfg.epochs = 3;
    const MixtureAtlas trained = train_mixture(x, cfg);
    CHECK(trained.weights() == std::vector<double>{1.0});
    CHECK(trained.trace.size() == 3);
}

TEST_CASE("responsibilities and weights stay on the simplex") {
    Rng rng(3);
    std::vector<CouplingStack> comps;
    for (int k = 0; k < 4; ++k) comps.push_back(CouplingStack::create(5, 2, {8}, rng, 5.0, 1.0));
    const MixtureAtlas atlas(comps, {0.1, 0.2, 0.3, 0.4}, 3);
    double total = 0.0;
    for (double w : atlas.weights()) total += w;
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (double scale : {1e-3, 1.0, 30.0}) {
        Matrix x = testing::random_matrix(200, 5, rng);
        for (double& v : x.values()) v *= scale;
        const Matrix r = responsibilities(atlas, x);
        for (std::size_t i = 0; i < 200; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                CHECK(r(i, k) >= 0.0);
                s += r(i, k);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(MixtureAtlas(comps, {1.0, 0.0, 1.0, 1.0}, 3), ConfigError);
    CHECK_THROWS_AS(MixtureAtlas(comps, {1.0, 1.0}, 3), DimensionError);
    CHECK_THROWS_AS(MixtureAtlas(comps, {1, 1, 1, 1}, 6), DimensionError);
}

TEST_CASE("two separated flat blobs get one chart each") {
    Rng rng(4);
    const std::size_t n = 400;
    const Matrix x = two_blobs(n, 20.0, rng);
    const MixtureAtlas atlas = train_mixture(x, blob_config());

    // nearest-centroid clustering oracle
    std::vector<double> ca(3, 0.0), cb(3, 0.0);
    std::vector<int> cluster(n);
    for (std::size_t i = 0; i < n; ++i) {
        double da = 0.0, db = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            da += std::pow(x(i, j) - 20.0, 2);
            db += std::pow(x(i, j) + 20.0, 2);
        }
        cluster[i] = da < db ? 0 : 1;
    }
    const Matrix r = responsibilities(atlas, x);
    // charts carry no fixed labels: score both matchings
    std::size_t same = 0, swapped = 0, hard_same = 0, hard_swapped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(cluster[i]);
        same += r(i, k) >= 0.9;
        swapped += r(i, 1 - k) >= 0.9;
        const std::size_t a = assign_chart(atlas, x.row(i)).chart;
        hard_same += a == k;
        hard_swapped += a != k;
    }
    CHECK(std::max(same, swapped) >= 0.95 * n);
    CHECK(std::max(hard_same, hard_swapped) >= 0.95 * n);

    for (const auto& e : atlas.trace) {
        double s = 0.0;
        for (double w : e.weights) {
            CHECK(w > 0.0);
            s += w;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK(atlas.trace.back().loss < 0.01 * atlas.initial_loss);
    CHECK(mixture_loss(atlas, x) == doctest::Approx(atlas.trace.back().loss));
}

TEST_CASE("mixture loss mostly decreases at default optimizer settings") {
    Rng rng(9);
    const Matrix x = two_blobs(400, 20.0, rng);
    AtlasConfig cfg;
    cfg.components = 2;
    cfg.chart_dim = 2;
    cfg.epochs = 40;
    const MixtureAtlas atlas = train_mixture(x, cfg);
    std::size_t down = 0;
    for (std::size_t e = 1; e < atlas.trace.size(); ++e) down += atlas.trace[e].loss <= atlas.trace[e - 1].loss;
    CHECK(down >= 0.9 * (atlas.trace.size() - 1));
}

TEST_CASE("training is deterministic and validates its inputs") {
    Rng rng(5);
    const Matrix x = two_blobs(60, 3.0, rng);
    AtlasConfig cfg = blob_config();
    cfg.epochs = 4;
    const MixtureAtlas a = train_mixture(x, cfg), b = train_mixture(x, cfg);
    CHECK(a.components() == b.components());
    CHECK(a.weights() == b.weights());

    cfg.components = 0;
    CHECK_THROWS_AS(train_mixture(x, cfg), ConfigError);
    cfg = blob_config();
    CHECK_THROWS_AS(train_mixture(Matrix(0, 3), cfg), DimensionError);
    cfg.chart_dim = 4;
    CHECK_THROWS_AS(train_mixture(x, cfg), DimensionError);
    cfg = blob_config();
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("chart grid") {
    Rng rng(6);
    std::vector<CouplingStack> comps{CouplingStack::create(5, 2, {8}, rng), CouplingStack::create(5, 2, {8}, rng)};
    const MixtureAtlas atlas(comps, {1, 1}, 4);
    const std::vector<double> rest{0.3, -0.1};
    const Matrix g = chart_grid_samples(atlas, 1, 0.2, 5, rest);
    CHECK(g.rows() == 25);
    CHECK(g.cols() == 5);
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t l = 0; l < 5; ++l) {
            const std::vector<double> z{0.2 * j, 0.2 * l, 0.3, -0.1};
            const auto x = chart_decode(atlas.components()[1], z);
            CHECK(std::equal(x.begin(), x.end(), g.row(j * 5 + l).begin()));
            // decoded grid points lie on the chart: re-encoding returns the grid coordinates
            const auto e = chart_encode(atlas.components()[1], x, 4);
            for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(e.z[i] - z[i]) < 1e-9);
        }
    CHECK(chart_grid_samples(atlas, 0, 0.2, 0).rows() == 0);
    CHECK_THROWS_AS(chart_grid_samples(atlas, 2, 0.2, 5), DimensionError);
    CHECK_THROWS_AS(chart_grid_samples(atlas, 0, 0.2, 5, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("decoding a training encoding reproduces its reconstruction error") {
    Rng rng(7);
    const Matrix x = two_blobs(200, 20.0, rng);
    const MixtureAtlas atlas = train_mixture(x, blob_config());
    const auto losses = component_losses(atlas.components()[0], x, 2, atlas.params());
    for (std::size_t i = 0; i < 200; i += 17) {
        const auto e = chart_encode(atlas.components()[0], x.row(i), 2);
        const auto decoded = chart_decode(atlas.components()[0], e.z);
        double err = 0.0;
        for (std::size_t j = 0; j < 3; ++j) err += std::pow(decoded[j] - x(i, j), 2);
        CHECK(err == doctest::Approx(losses[i].reconstruction).epsilon(1e-9));
        // a one-point grid of step equal to the encoding lands on it when the coordinates match
        if (i == 0) {
            const Matrix g = chart_grid_samples(atlas, 0, 0.0, 1);
            const auto origin = chart_decode(atlas.components()[0], std::vector<double>{0.0, 0.0});
            CHECK(std::equal(origin.begin(), origin.end(), g.row(0).begin()));
        }
    }
}

TEST_CASE("atlas checkpoints round-trip") {
    Rng rng(8);
    const Matrix x = two_blobs(60, 3.0, rng);
    AtlasConfig cfg = blob_config();
    cfg.epochs = 2;
    const MixtureAtlas a = train_mixture(x, cfg);
    const MixtureAtlas b = load_atlas(Container::from_bytes(save_atlas(a).to_bytes()));
    CHECK(b.components() == a.components());
    CHECK(b.weights() == a.weights());
    CHECK(b.chart_dim() == 2);
    CHECK(b.params().temperature == a.params().temperature);
    CHECK(responsibilities(b, x) == responsibilities(a, x));
    CHECK_THROWS_AS(load_atlas(Container("mlp")), FormatError);
}
