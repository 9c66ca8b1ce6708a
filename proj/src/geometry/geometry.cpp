#include "manid/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "manid/errors.hpp"

namespace manid {

Matrix pullback_metric(const Matrix& jacobian, const std::optional<Matrix>& h) {
    if (!h) return gram_cols(jacobian);
    if (h->rows() != jacobian.rows() || h->cols() != jacobian.rows())
        throw DimensionError("pullback_metric: ambient metric does not match map output dimension");
    return symmetrized(matmul_tn(jacobian, matmul(*h, jacobian)));
}

Matrix pullback_metric(const MlpNet& net, std::span<const double> x, const std::optional<Matrix>& h) {
    return pullback_metric(net.jacobian(x), h);
}

Matrix pullback_metric(const JacobianFn& jac, std::span<const double> x, const std::optional<Matrix>& h) {
    const Matrix j = jac(x);
    if (j.cols() != x.size()) throw DimensionError("pullback_metric: Jacobian width != point dimension");
    return pullback_metric(j, h);
}

Matrix encoder_mean_jacobian(const VaeModel& model, std::span<const double> x) {
    return model.encoder().jacobian_rows(x, 0, model.latent_dim());
}

Matrix encoder_gram(const VaeModel& model, std::span<const double> x) {
    return gram_rows(encoder_mean_jacobian(model, x));
}

Matrix decoder_metric(const VaeModel& model, std::span<const double> z) {
    return gram_cols(model.decoder().jacobian(z));
}

MetricReport metric_report(std::span<const double> point, Matrix metric) {
    MetricReport r;
    r.point.assign(point.begin(), point.end());
    r.metric = symmetrized(metric);
    r.spectrum = sym_eigvals(r.metric);
    return r;
}

DualityReport duality_check(const Matrix& jd, const Matrix& je, double tol) {
    if (jd.cols() != je.rows() || jd.rows() != je.cols())
        throw DimensionError("duality_check: decoder Jacobian must be n x m and encoder m x n");
    DualityReport r;
    r.encoder_rank = numerical_rank(je, tol);
    r.encoder_full_row_rank = r.encoder_rank == je.rows();
    const Matrix lhs = gram_cols(jd);
    const Matrix rhs = pseudoinverse(gram_rows(je), tol);
    r.max_error = max_abs_diff(lhs, rhs);
    return r;
}

void IdConfig::validate() const {
    if (!(rho > 1.0)) throw ConfigError("gap ratio threshold must exceed 1");
    if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("null floor must lie in (0, 1)");
    if (sample_size == 0) throw ConfigError("sample size must be positive");
}

std::string to_string(MetricSide s) {
    return s == MetricSide::encoder_gram ? "encoder_gram" : "decoder_pullback";
}

MetricSide metric_side_from_string(const std::string& s) {
    if (s == "encoder_gram" || s == "encoder") return MetricSide::encoder_gram;
    if (s == "decoder_pullback" || s == "decoder") return MetricSide::decoder_pullback;
    throw ConfigError("unknown metric side '" + s + "'");
}

namespace {

struct Gap {
    std::size_t id;
    double ratio;
    bool found;
};

Gap find_gap(const std::vector<double>& lam, double rho, double floor) {
    const std::size_t m = lam.size();
    constexpr double tiny = std::numeric_limits<double>::min();
    double best_ratio = 0.0;
    if (m == 0 || !(lam[0] > 0.0)) return {m, 0.0, false};
    for (std::size_t i = 1; i < m; ++i) {
        const double ratio = lam[i - 1] / std::max(lam[i], tiny);
        best_ratio = std::max(best_ratio, ratio);
        if (ratio >= rho && lam[i] < floor * lam[0]) return {i, ratio, true};
    }
    return {m, best_ratio, false};
}

std::vector<double> clamped(const Spectrum& s) {
    std::vector<double> v = s.values;
    for (double& x : v) x = std::max(x, 0.0);
    return v;
}

}  // namespace

std::size_t spectrum_id(const Spectrum& s, double rho, double floor, bool* no_gap) {
    const Gap g = find_gap(clamped(s), rho, floor);
    if (no_gap) *no_gap = !g.found;
    return g.id;
}

IdEstimate estimate_id(const std::vector<Spectrum>& spectra, double rho, double floor) {
    if (spectra.empty()) throw DimensionError("estimate_id: no spectra given");
    if (!(rho > 1.0)) throw ConfigError("estimate_id: rho must exceed 1");
    if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("estimate_id: floor must lie in (0, 1)");
    const std::size_t m = spectra.front().dim();
    std::vector<double> mean(m, 0.0);
    IdEstimate est;
    for (const auto& s : spectra) {
        if (s.dim() != m) throw DimensionError("estimate_id: spectra have different lengths");
        const auto v = clamped(s);
        for (std::size_t i = 0; i < m; ++i) mean[i] += v[i];
        est.per_sample_ids.push_back(spectrum_id(s, rho, floor));
    }
    for (double& x : mean) x /= static_cast<double>(spectra.size());
    // The mean of descending sequences is descending; the Spectrum ctor keeps it so.
    est.mean_spectrum = Spectrum(mean);
    const Gap g = find_gap(est.mean_spectrum.values, rho, floor);
    est.id = g.id;
    est.gap_index = g.id;
    est.gap_ratio = g.ratio;
    est.no_gap = !g.found;
    est.spectra = spectra;
    return est;
}

std::vector<std::size_t> subsample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), 0);
    if (n >= population) return idx;
    Rng rng(seed);
    // Partial Fisher-Yates, then sorted so evaluation order follows the data.
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

IdEstimate dataset_id(const VaeModel& model, const Matrix& samples, const IdConfig& cfg, MetricSide side) {
    cfg.validate();
    if (samples.rows() == 0) throw DimensionError("dataset_id: empty dataset");
    if (samples.cols() != model.ambient_dim()) throw DimensionError("dataset_id: sample width mismatch");
    std::vector<Spectrum> spectra;
    for (std::size_t i : subsample_indices(samples.rows(), cfg.sample_size, cfg.seed)) {
        const auto x = samples.row(i);
        if (side == MetricSide::encoder_gram) {
            spectra.push_back(sym_eigvals(encoder_gram(model, x)));
        } else {
            const auto z = model.encode_mean(x);
            spectra.push_back(sym_eigvals(decoder_metric(model, z)));
        }
    }
    return estimate_id(spectra, cfg.rho, cfg.floor);
}

std::string spectrum_csv(const IdEstimate& est) {
    const std::size_t m = est.mean_spectrum.dim();
    std::ostringstream out;
    out << "sample_index";
    for (std::size_t i = 1; i <= m; ++i) out << ",lambda_" << i;
    out << '\n';
    for (std::size_t k = 0; k < est.spectra.size(); ++k) {
        out << k;
        for (double v : est.spectra[k].values) out << ',' << format_exact(v);
        out << '\n';
    }
    out << "mean";
    for (double v : est.mean_spectrum.values) out << ',' << format_exact(v);
    out << '\n';
    return out.str();
}

std::string id_report(const IdEstimate& est) {
    std::ostringstream out;
    out << "id=" << est.id << '\n'
        << "gap_index=" << est.gap_index << '\n'
        << "gap_ratio=" << format_exact(est.gap_ratio) << '\n'
        << "no_gap=" << (est.no_gap ? 1 : 0) << '\n'
        << "samples=" << est.spectra.size() << '\n'
        << "mean_spectrum=";
    for (std::size_t i = 0; i < est.mean_spectrum.dim(); ++i)
        out << (i ? "," : "") << format_exact(est.mean_spectrum[i]);
    out << '\n';
    return out.str();
}

}  // namespace manid
