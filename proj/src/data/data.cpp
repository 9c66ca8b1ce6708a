#include "manid/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "manid/errors.hpp"

namespace manid {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string to_string(NormalizationMode m) {
    switch (m) {
        case NormalizationMode::none: return "none";
        case NormalizationMode::global: return "global";
        case NormalizationMode::per_feature: return "per_feature";
    }
    return "none";
}

NormalizationMode normalization_mode_from_string(const std::string& s) {
    if (s == "none") return NormalizationMode::none;
    if (s == "global") return NormalizationMode::global;
    if (s == "per_feature") return NormalizationMode::per_feature;
    throw ConfigError("unknown normalization mode '" + s + "'");
}

LabeledDataset gen_circle(std::size_t n, std::uint64_t seed, double noise_sigma, bool stratified) {
    if (n == 0) throw ConfigError("gen_circle: n must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("gen_circle: noise must be non-negative");
    LabeledDataset ds;
    ds.samples = Matrix(n, 2);
    ds.params = Matrix(n, 1);
    Rng rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = stratified ? 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n) : angle(rng);
        double x = std::cos(t), y = std::sin(t);
        if (noise_sigma > 0.0) {
            x += noise_sigma * noise(rng);
            y += noise_sigma * noise(rng);
        }
        ds.samples(i, 0) = x;
        ds.samples(i, 1) = y;
        ds.params(i, 0) = t;
    }
    ds.meta.name = "circle";
    ds.meta.true_id = 1;
    ds.meta.seed = seed;
    ds.meta.config["noise_sigma"] = format_exact(noise_sigma);
    ds.meta.config["stratified"] = stratified ? "1" : "0";
    return ds;
}

LabeledDataset gen_paraboloid(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("gen_paraboloid: n must be positive");
    LabeledDataset ds;
    ds.samples = Matrix(n, 3);
    ds.params = Matrix(n, 2);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng), y = u(rng);
        ds.samples(i, 0) = x;
        ds.samples(i, 1) = y;
        ds.samples(i, 2) = x * x + y * y;
        ds.params(i, 0) = x;
        ds.params(i, 1) = y;
    }
    ds.meta.name = "paraboloid";
    ds.meta.true_id = 2;
    ds.meta.seed = seed;
    return ds;
}

// COULE-mini ------------------------------------------------------------------

void CouleConfig::validate() const {
    if (side < 16) throw ConfigError("COULE side must be at least 16 pixels");
    if (!(radius_min > 0.0 && radius_min <= radius_max)) throw ConfigError("invalid COULE radius range");
    if (!(line_thickness_px > 0.0 && line_length > 0.0)) throw ConfigError("invalid COULE line geometry");
    auto range_ok = [](double lo, double hi) { return lo >= 0.0 && lo <= hi && hi <= 1.0; };
    if (!range_ok(intensity1_min, intensity1_max) || !range_ok(intensity2_min, intensity2_max) ||
        !range_ok(line_intensity_min, line_intensity_max))
        throw ConfigError("COULE intensities must lie in [0, 1]");
    if (!(midpoint_min <= midpoint_max)) throw ConfigError("invalid COULE midpoint range");
    if (!(content_radius > 0.0 && content_radius <= 0.5)) throw ConfigError("content radius must lie in (0, 0.5]");
    // Both circles must fit side by side inside the content disk.
    if (4.0 * radius_min + circle_margin > 2.0 * content_radius || radius_max > content_radius)
        throw ConfigError("COULE circles cannot fit inside the content disk");
    if (line_length / 2.0 > content_radius) throw ConfigError("COULE line cannot fit inside the content disk");
}

std::map<std::string, std::string> CouleConfig::describe() const {
    return {{"side", std::to_string(side)},
            {"radius_min", format_exact(radius_min)},
            {"radius_max", format_exact(radius_max)},
            {"circle_margin", format_exact(circle_margin)},
            {"intensity1", format_exact(intensity1_min) + ":" + format_exact(intensity1_max)},
            {"intensity2", format_exact(intensity2_min) + ":" + format_exact(intensity2_max)},
            {"line_intensity", format_exact(line_intensity_min) + ":" + format_exact(line_intensity_max)},
            {"line_length", format_exact(line_length)},
            {"line_thickness_px", format_exact(line_thickness_px)},
            {"midpoint", format_exact(midpoint_min) + ":" + format_exact(midpoint_max)},
            {"content_radius", format_exact(content_radius)}};
}

std::vector<double> CouleParams::to_vector() const {
    return {cx1, cy1, r1, intensity1, cx2, cy2, r2, intensity2, mx, my, angle, line_intensity};
}

CouleParams CouleParams::from_vector(std::span<const double> v) {
    if (v.size() != 12) throw DimensionError("COULE parameters have 12 entries");
    CouleParams p;
    p.cx1 = v[0]; p.cy1 = v[1]; p.r1 = v[2]; p.intensity1 = v[3];
    p.cx2 = v[4]; p.cy2 = v[5]; p.r2 = v[6]; p.intensity2 = v[7];
    p.mx = v[8]; p.my = v[9]; p.angle = v[10]; p.line_intensity = v[11];
    return p;
}

std::vector<double> render_coule(const CouleParams& p, const CouleConfig& cfg) {
    const std::size_t n = cfg.side;
    const double D = static_cast<double>(n);
    const double half_thick = 0.5 * cfg.line_thickness_px / D;
    const double ux = std::cos(p.angle), uy = std::sin(p.angle);
    const double hl = 0.5 * cfg.line_length;
    std::vector<double> img(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = (static_cast<double>(i) + 0.5) / D;
        for (std::size_t j = 0; j < n; ++j) {
            const double x = (static_cast<double>(j) + 0.5) / D;
            // Linear one-pixel ramp across each boundary.
            const double c1 = clamp01(0.5 + (p.r1 - std::hypot(x - p.cx1, y - p.cy1)) * D);
            const double c2 = clamp01(0.5 + (p.r2 - std::hypot(x - p.cx2, y - p.cy2)) * D);
            const double dx = x - p.mx, dy = y - p.my;
            const double along = std::clamp(dx * ux + dy * uy, -hl, hl);
            const double dist = std::hypot(dx - along * ux, dy - along * uy);
            const double cl = clamp01(0.5 + (half_thick - dist) * D);
            img[i * n + j] = std::max({c1 * p.intensity1, c2 * p.intensity2, cl * p.line_intensity});
        }
    }
    return img;
}

CouleParams sample_coule_params(const CouleConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
    const double R = cfg.content_radius;
    auto draw_circle = [&](double& cx, double& cy, double& r) {
        for (;;) {
            r = uniform(cfg.radius_min, cfg.radius_max);
            cx = uniform(0.5 - R + r, 0.5 + R - r);
            cy = uniform(0.5 - R + r, 0.5 + R - r);
            if (std::hypot(cx - 0.5, cy - 0.5) + r <= R) return;
        }
    };
    CouleParams p;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 100000) throw ConfigError("COULE sampler could not place two disjoint circles");
        draw_circle(p.cx1, p.cy1, p.r1);
        draw_circle(p.cx2, p.cy2, p.r2);
        if (std::hypot(p.cx1 - p.cx2, p.cy1 - p.cy2) >= p.r1 + p.r2 + cfg.circle_margin) break;
    }
    p.intensity1 = uniform(cfg.intensity1_min, cfg.intensity1_max);
    p.intensity2 = uniform(cfg.intensity2_min, cfg.intensity2_max);
    const double hl = 0.5 * cfg.line_length + 0.5 * cfg.line_thickness_px / static_cast<double>(cfg.side);
    for (int attempt = 0;; ++attempt) {
        if (attempt > 100000) throw ConfigError("COULE sampler could not place the line");
        p.mx = uniform(cfg.midpoint_min, cfg.midpoint_max);
        p.my = uniform(cfg.midpoint_min, cfg.midpoint_max);
        p.angle = uniform(0.0, kPi);
        const double ex = hl * std::cos(p.angle), ey = hl * std::sin(p.angle);
        if (std::hypot(p.mx + ex - 0.5, p.my + ey - 0.5) <= R &&
            std::hypot(p.mx - ex - 0.5, p.my - ey - 0.5) <= R)
            break;
    }
    p.line_intensity = uniform(cfg.line_intensity_min, cfg.line_intensity_max);
    return p;
}

LabeledDataset gen_coule(std::size_t n, const CouleConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (n == 0) throw ConfigError("gen_coule: n must be positive");
    LabeledDataset ds;
    ds.samples = Matrix(n, cfg.side * cfg.side);
    ds.params = Matrix(n, 12);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const CouleParams p = sample_coule_params(cfg, rng);
        const auto img = render_coule(p, cfg);
        std::copy(img.begin(), img.end(), ds.samples.row(i).begin());
        const auto pv = p.to_vector();
        std::copy(pv.begin(), pv.end(), ds.params.row(i).begin());
    }
    ds.meta.name = "coule";
    ds.meta.true_id = 12;
    ds.meta.seed = seed;
    ds.meta.config = cfg.describe();
    return ds;
}

// Radon ---------------------------------------------------------------------

std::vector<double> radon_angles(std::size_t n_angles) {
    std::vector<double> a(n_angles);
    for (std::size_t i = 0; i < n_angles; ++i) a[i] = kPi * static_cast<double>(i) / static_cast<double>(n_angles);
    return a;
}

std::vector<double> radon_offsets(std::size_t n_offsets) {
    std::vector<double> t(n_offsets);
    for (std::size_t j = 0; j < n_offsets; ++j)
        t[j] = -1.0 + (static_cast<double>(j) + 0.5) * 2.0 / static_cast<double>(n_offsets);
    return t;
}

namespace {

// Bilinear sample with zero outside; (x, y) on [-1, 1]^2, y up.
double sample_bilinear(std::span<const double> img, std::size_t side, double x, double y) {
    const double D = static_cast<double>(side);
    const double u = (x + 1.0) * 0.5 * D - 0.5;  // column
    const double v = (1.0 - y) * 0.5 * D - 0.5;  // row
    const double fu = std::floor(u), fv = std::floor(v);
    const long c0 = static_cast<long>(fu), r0 = static_cast<long>(fv);
    const double au = u - fu, av = v - fv;
    auto at = [&](long r, long c) {
        if (r < 0 || c < 0 || r >= static_cast<long>(side) || c >= static_cast<long>(side)) return 0.0;
        return img[static_cast<std::size_t>(r) * side + static_cast<std::size_t>(c)];
    };
    return (1 - av) * ((1 - au) * at(r0, c0) + au * at(r0, c0 + 1)) +
           av * ((1 - au) * at(r0 + 1, c0) + au * at(r0 + 1, c0 + 1));
}

}  // namespace

Matrix radon(std::span<const double> image, std::size_t side, std::size_t n_angles,
             std::size_t n_offsets, std::optional<double> ds) {
    if (image.size() != side * side) throw DimensionError("radon: image is not side x side");
    if (n_angles == 0 || n_offsets == 0) throw ConfigError("radon: grid sizes must be positive");
    const double step = ds.value_or(1.0 / static_cast<double>(side));  // half of a 2/side pixel
    if (!(step > 0.0)) throw ConfigError("radon: step must be positive");
    const auto thetas = radon_angles(n_angles);
    const auto ts = radon_offsets(n_offsets);
    Matrix sino(n_angles, n_offsets);
    for (std::size_t a = 0; a < n_angles; ++a) {
        const double c = std::cos(thetas[a]), s = std::sin(thetas[a]);
        for (std::size_t j = 0; j < n_offsets; ++j) {
            const double t = ts[j];
            const double h = std::sqrt(std::max(0.0, 1.0 - t * t));
            const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * h / step)));
            const double dsk = 2.0 * h / static_cast<double>(k);
            double sum = 0.0;
            for (std::size_t q = 0; q < k; ++q) {
                const double sv = -h + (static_cast<double>(q) + 0.5) * dsk;
                sum += sample_bilinear(image, side, t * c - sv * s, t * s + sv * c);
            }
            sino(a, j) = sum * dsk;
        }
    }
    return sino;
}

LabeledDataset sinogram_dataset(const LabeledDataset& images, std::size_t n_angles, std::size_t n_offsets) {
    const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(images.dim()))));
    if (side * side != images.dim()) throw DimensionError("sinogram_dataset: samples are not square images");
    const Matrix raw = denormalize(images.samples, images.meta.normalization);
    LabeledDataset ds;
    ds.samples = Matrix(images.size(), n_angles * n_offsets);
    ds.params = images.params;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Matrix s = radon(raw.row(i), side, n_angles, n_offsets);
        std::copy(s.values().begin(), s.values().end(), ds.samples.row(i).begin());
    }
    ds.meta.name = images.meta.name + "-sinogram";
    ds.meta.true_id = images.meta.true_id;
    ds.meta.seed = images.meta.seed;
    ds.meta.config = images.meta.config;
    ds.meta.config["n_angles"] = std::to_string(n_angles);
    ds.meta.config["n_offsets"] = std::to_string(n_offsets);
    return ds;
}

// Normalisation ------------------------------------------------------------

LabeledDataset normalize_and_jitter(const LabeledDataset& ds, double jitter, NormalizationMode mode) {
    if (!(jitter >= 0.0)) throw ConfigError("jitter must be non-negative");
    if (ds.meta.normalization.mode != NormalizationMode::none)
        throw ConfigError("dataset is already normalized");
    LabeledDataset out = ds;
    out.meta.config["jitter"] = format_exact(jitter);
    Normalization& nz = out.meta.normalization;
    nz.mode = mode;
    if (mode == NormalizationMode::none || ds.size() == 0) return out;

    const std::size_t D = ds.dim();
    const std::size_t groups = mode == NormalizationMode::global ? 1 : D;
    std::vector<double> lo(groups, INFINITY), hi(groups, -INFINITY);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < D; ++j) {
            const std::size_t g = groups == 1 ? 0 : j;
            lo[g] = std::min(lo[g], ds.samples(i, j));
            hi[g] = std::max(hi[g], ds.samples(i, j));
        }
    nz.offset = lo;
    nz.scale.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) nz.scale[g] = hi[g] - lo[g];
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < D; ++j) {
            const std::size_t g = groups == 1 ? 0 : j;
            double& v = out.samples(i, j);
            v = nz.scale[g] > 0.0 ? (v - nz.offset[g]) / nz.scale[g] : 0.0;
        }
    return out;
}

Matrix denormalize(const Matrix& samples, const Normalization& n) {
    if (n.mode == NormalizationMode::none) return samples;
    const std::size_t groups = n.offset.size();
    if (groups != n.scale.size() || (groups != 1 && groups != samples.cols()))
        throw DimensionError("normalization record does not match sample width");
    Matrix out = samples;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) {
            const std::size_t g = groups == 1 ? 0 : j;
            out(i, j) = out(i, j) * n.scale[g] + n.offset[g];
        }
    return out;
}

// Files -----------------------------------------------------------------------

Container dataset_to_container(const LabeledDataset& ds) {
    Container c("dataset");
    c.set("name", ds.meta.name);
    c.set("n", ds.size());
    c.set("dim", ds.dim());
    c.set("param_dim", ds.params.cols());
    c.set("true_id", static_cast<long long>(ds.meta.true_id.value_or(-1)));
    c.set("seed", static_cast<long long>(ds.meta.seed));
    c.set("normalization", to_string(ds.meta.normalization.mode));
    for (const auto& [k, v] : ds.meta.config) c.set("config." + k, v);
    c.add_block("samples", std::vector<double>(ds.samples.values().begin(), ds.samples.values().end()));
    c.add_block("params", std::vector<double>(ds.params.values().begin(), ds.params.values().end()));
    if (ds.meta.normalization.mode != NormalizationMode::none) {
        c.add_block("normalization.offset", ds.meta.normalization.offset);
        c.add_block("normalization.scale", ds.meta.normalization.scale);
    }
    return c;
}

LabeledDataset dataset_from_container(const Container& c) {
    if (c.kind() != "dataset") throw FormatError("expected a dataset file, got '" + c.kind() + "'");
    LabeledDataset ds;
    const std::size_t n = c.get_size("n"), d = c.get_size("dim"), p = c.get_size("param_dim");
    ds.samples = Matrix(n, d, c.block("samples"));
    ds.params = Matrix(n, p, c.block("params"));
    ds.meta.name = c.get("name");
    const long long id = c.get_int("true_id");
    if (id >= 0) ds.meta.true_id = static_cast<int>(id);
    ds.meta.seed = static_cast<std::uint64_t>(c.get_int("seed"));
    ds.meta.normalization.mode = normalization_mode_from_string(c.get("normalization"));
    if (ds.meta.normalization.mode != NormalizationMode::none) {
        ds.meta.normalization.offset = c.block("normalization.offset");
        ds.meta.normalization.scale = c.block("normalization.scale");
    }
    for (const auto& [k, v] : c.entries())
        if (k.rfind("config.", 0) == 0) ds.meta.config[k.substr(7)] = v;
    return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
    dataset_to_container(ds).write(path);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_container(Container::read(path));
}

LabeledDataset dataset_slice(const LabeledDataset& ds, std::size_t first, std::size_t count) {
    if (first + count > ds.size()) throw DimensionError("dataset_slice: range out of bounds");
    LabeledDataset out;
    out.samples = ds.samples.row_block(first, count);
    out.params = ds.params.row_block(first, count);
    out.meta = ds.meta;
    return out;
}

}  // namespace manid
