#include "manid/experiments.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "manid/baselines.hpp"
#include "manid/errors.hpp"
#include "manid/svg.hpp"

namespace manid {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

json to_json(const DatasetSpec& d) {
    json j{{"kind", d.kind}, {"n", d.n}, {"res", d.res}, {"angles", d.angles}, {"offsets", d.offsets},
           {"sigma", d.sigma}, {"stratified", d.stratified}};
    j["normalization"] = d.normalization ? json(to_string(*d.normalization)) : json(nullptr);
    return j;
}

void from_json(const json& j, DatasetSpec& d) {
    check_keys(j, {"kind", "n", "res", "angles", "offsets", "sigma", "stratified", "normalization"}, "dataset");
    read(j, "kind", d.kind);
    read(j, "n", d.n);
    read(j, "res", d.res);
    read(j, "angles", d.angles);
    read(j, "offsets", d.offsets);
    read(j, "sigma", d.sigma);
    read(j, "stratified", d.stratified);
    if (j.contains("normalization")) {
        if (j["normalization"].is_null()) d.normalization.reset();
        else d.normalization = normalization_mode_from_string(j["normalization"].get<std::string>());
    }
}

json to_json(const ModelSpec& m) {
    return {{"latent_dim", m.latent_dim},         {"encoder_hidden", m.encoder_hidden},
            {"decoder_hidden", m.decoder_hidden}, {"hidden", to_string(m.hidden)},
            {"output", to_string(m.output)},      {"slope", m.slope}};
}

void from_json(const json& j, ModelSpec& m) {
    check_keys(j, {"latent_dim", "encoder_hidden", "decoder_hidden", "hidden", "output", "slope"}, "model");
    read(j, "latent_dim", m.latent_dim);
    read(j, "encoder_hidden", m.encoder_hidden);
    read(j, "decoder_hidden", m.decoder_hidden);
    if (j.contains("hidden")) m.hidden = activation_from_string(j["hidden"].get<std::string>());
    if (j.contains("output")) m.output = activation_from_string(j["output"].get<std::string>());
    read(j, "slope", m.slope);
}

json to_json(const TrainConfig& t) {
    return {{"loss", to_string(t.loss)},
            {"alpha", t.alpha},
            {"beta", t.beta},
            {"gamma", t.gamma},
            {"lasso_step", to_string(t.lasso_step)},
            {"recon_weight", t.recon_weight},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"lr", t.lr},
            {"lr_final", t.lr_final},
            {"jitter", t.jitter},
            {"jitter_targets", t.jitter_targets},
            {"seed", t.seed}};
}

void from_json(const json& j, TrainConfig& t) {
    check_keys(j, {"loss", "alpha", "beta", "gamma", "lasso_step", "recon_weight", "epochs", "batch_size", "lr",
                   "lr_final", "jitter", "jitter_targets", "seed"},
               "train");
    if (j.contains("loss")) t.loss = loss_kind_from_string(j["loss"].get<std::string>());
    if (j.contains("lasso_step")) t.lasso_step = lasso_step_from_string(j["lasso_step"].get<std::string>());
    read(j, "alpha", t.alpha);
    read(j, "beta", t.beta);
    read(j, "gamma", t.gamma);
    read(j, "recon_weight", t.recon_weight);
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "lr", t.lr);
    read(j, "lr_final", t.lr_final);
    read(j, "jitter", t.jitter);
    read(j, "jitter_targets", t.jitter_targets);
    read(j, "seed", t.seed);
}

json to_json(const IdSpec& s) {
    return {{"rho", s.config.rho},
            {"floor", s.config.floor},
            {"sample_size", s.config.sample_size},
            {"seed", s.config.seed},
            {"side", to_string(s.side)}};
}

void from_json(const json& j, IdSpec& s) {
    check_keys(j, {"rho", "floor", "sample_size", "seed", "side"}, "id");
    read(j, "rho", s.config.rho);
    read(j, "floor", s.config.floor);
    read(j, "sample_size", s.config.sample_size);
    read(j, "seed", s.config.seed);
    if (j.contains("side")) s.side = metric_side_from_string(j["side"].get<std::string>());
}

json to_json(const BridgeConfig& b) {
    return {{"hidden", b.hidden}, {"blocks", b.blocks},     {"epochs", b.epochs},     {"batch_size", b.batch_size},
            {"lr", b.lr},         {"lr_final", b.lr_final}, {"seed", b.seed}};
}

void from_json(const json& j, BridgeConfig& b) {
    check_keys(j, {"hidden", "blocks", "epochs", "batch_size", "lr", "lr_final", "seed"}, "bridge");
    read(j, "hidden", b.hidden);
    read(j, "blocks", b.blocks);
    read(j, "epochs", b.epochs);
    read(j, "batch_size", b.batch_size);
    read(j, "lr", b.lr);
    read(j, "lr_final", b.lr_final);
    read(j, "seed", b.seed);
}

json to_json(const AtlasConfig& a) {
    return {{"components", a.components},
            {"chart_dim", a.chart_dim},
            {"blocks", a.blocks},
            {"hidden", a.hidden},
            {"clamp", a.clamp},
            {"output_scale", a.output_scale},
            {"residual_weight", a.residual_weight},
            {"beta", a.beta},
            {"temperature", a.temperature},
            {"epochs", a.epochs},
            {"batch_size", a.batch_size},
            {"lr", a.lr},
            {"lr_final", a.lr_final},
            {"seed", a.seed}};
}

void from_json(const json& j, AtlasConfig& a) {
    check_keys(j, {"components", "chart_dim", "blocks", "hidden", "clamp", "output_scale", "residual_weight", "beta",
                   "temperature", "epochs", "batch_size", "lr", "lr_final", "seed"},
               "atlas");
    read(j, "components", a.components);
    read(j, "chart_dim", a.chart_dim);
    read(j, "blocks", a.blocks);
    read(j, "hidden", a.hidden);
    read(j, "clamp", a.clamp);
    read(j, "output_scale", a.output_scale);
    read(j, "residual_weight", a.residual_weight);
    read(j, "beta", a.beta);
    read(j, "temperature", a.temperature);
    read(j, "epochs", a.epochs);
    read(j, "batch_size", a.batch_size);
    read(j, "lr", a.lr);
    read(j, "lr_final", a.lr_final);
    read(j, "seed", a.seed);
}

std::string fmt(double v) { return format_exact(v); }

}  // namespace

// Config ---------------------------------------------------------------------

void ExperimentConfig::validate() const {
    static const std::set<std::string> kinds = {"circle", "paraboloid", "coule", "coule-sinogram"};
    if (!kinds.count(dataset.kind)) throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
    if (dataset.n == 0) throw ConfigError("dataset size must be positive");
    if (dataset.res < 8) throw ConfigError("image resolution must be at least 8");
    if (dataset.angles == 0 || dataset.offsets == 0) throw ConfigError("sinogram shape must be positive");
    if (dataset.sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
    if (model.latent_dim == 0) throw ConfigError("latent_dim must be positive");
    for (double p : prune)
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("pruning ratios must lie in [0, 1)");
    train.validate();
    id.config.validate();
    bridge.validate();
    atlas.validate();
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    id.config.seed = s;
    bridge.seed = s;
    atlas.seed = s;
}

ExperimentConfig ExperimentConfig::preset(const std::string& kind) {
    ExperimentConfig c;
    c.name = kind;
    c.dataset.kind = kind;
    c.train.lr = 1e-3;
    c.train.lr_final = 1e-5;
    c.train.jitter = 0.01;
    c.train.epochs = 300;
    c.train.batch_size = 64;
    if (kind == "circle") {
        c.dataset.n = 2000;
        c.train.beta = 1.0;
        c.train.recon_weight = 10.0;
        c.train.gamma = 1e-3;
    } else if (kind == "paraboloid") {
        c.dataset.n = 2000;
        c.train.beta = 0.1;
        c.train.recon_weight = 3.0;
        c.train.gamma = 1e-3;
    } else if (kind == "coule" || kind == "coule-sinogram") {
        c.dataset.n = 4000;
        c.dataset.res = 32;
        c.dataset.angles = 32;
        c.dataset.offsets = 32;
        c.model.latent_dim = 25;
        c.model.encoder_hidden = {256, 128};
        c.model.decoder_hidden = {128, 256};
        c.model.output = Activation::sigmoid;
        const double lr = c.train.lr, lr_final = c.train.lr_final, jitter = c.train.jitter;
        c.train = TrainConfig::embedding_defaults(c.dataset.res);
        c.train.lr = lr;
        c.train.lr_final = lr_final;
        c.train.jitter = jitter;
        c.train.beta = 1.0;
        c.train.gamma = 1e-2;
        c.train.lasso_step = LassoStep::proximal;
        c.train.epochs = 100;
        c.atlas.chart_dim = 12;
    } else {
        throw ConfigError("no preset for dataset kind '" + kind + "'");
    }
    return c;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir.string();
    j["dataset"] = to_json(cfg.dataset);
    j["model"] = to_json(cfg.model);
    j["train"] = to_json(cfg.train);
    j["id"] = to_json(cfg.id);
    j["prune"] = cfg.prune;
    j["bridge"] = to_json(cfg.bridge);
    j["atlas"] = to_json(cfg.atlas);
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"name", "seed", "out_dir", "dataset", "model", "train", "id", "prune", "bridge", "atlas"}, "config");
    ExperimentConfig cfg;
    // A named dataset kind starts from its preset.
    if (j.contains("dataset") && j["dataset"].contains("kind"))
        cfg = ExperimentConfig::preset(j["dataset"]["kind"].get<std::string>());
    read(j, "name", cfg.name);
    read(j, "seed", cfg.seed);
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("dataset")) from_json(j["dataset"], cfg.dataset);
    if (j.contains("model")) from_json(j["model"], cfg.model);
    if (j.contains("train")) from_json(j["train"], cfg.train);
    if (j.contains("id")) from_json(j["id"], cfg.id);
    read(j, "prune", cfg.prune);
    if (j.contains("bridge")) from_json(j["bridge"], cfg.bridge);
    if (j.contains("atlas")) from_json(j["atlas"], cfg.atlas);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_text(path)); }

LabeledDataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.kind == "circle") return gen_circle(spec.n, seed, spec.sigma, spec.stratified);
    if (spec.kind == "paraboloid") return gen_paraboloid(spec.n, seed);
    CouleConfig cc;
    cc.side = spec.res;
    if (spec.kind == "coule") {
        auto ds = gen_coule(spec.n, cc, seed);
        if (spec.normalization && *spec.normalization != NormalizationMode::none)
            ds = normalize_and_jitter(ds, 0.0, *spec.normalization);
        return ds;
    }
    if (spec.kind == "coule-sinogram") {
        const auto images = gen_coule(spec.n, cc, seed);
        return normalize_and_jitter(sinogram_dataset(images, spec.angles, spec.offsets), 0.0,
                                    spec.normalization.value_or(NormalizationMode::global));
    }
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
}

VaeArchitecture make_architecture(const ModelSpec& spec, std::size_t ambient_dim) {
    VaeArchitecture a;
    a.ambient_dim = ambient_dim;
    a.latent_dim = spec.latent_dim;
    a.encoder_hidden = spec.encoder_hidden;
    a.decoder_hidden = spec.decoder_hidden;
    a.hidden = spec.hidden;
    a.decoder_output = spec.output;
    a.slope = spec.slope;
    return a;
}

// Pruning --------------------------------------------------------------------

std::vector<PruneRow> run_prune_sweep(const VaeModel& model, const Matrix& samples, std::span<const double> ps,
                                      const IdSpec& id) {
    std::vector<PruneRow> rows;
    for (double p : ps) {
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("pruning ratios must lie in [0, 1)");
        VaeModel m = model;
        MlpNet* nets[] = {&m.encoder(), &m.decoder()};
        const PruneResult pr = prune_global_l1(nets, p);
        PruneRow row;
        row.p = p;
        row.masked = pr.masked;
        row.loss = mean_reconstruction_error(m, samples);
        row.estimate = dataset_id(m, samples, id.config, id.side);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<double> prune_knee(const std::vector<PruneRow>& rows, double tolerance) {
    const auto base = std::find_if(rows.begin(), rows.end(), [](const PruneRow& r) { return r.p == 0.0; });
    if (base == rows.end()) return std::nullopt;
    std::vector<const PruneRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const PruneRow* a, const PruneRow* b) { return a->p < b->p; });
    std::optional<double> knee;
    for (const PruneRow* r : sorted) {
        if (r->loss > tolerance * base->loss || r->estimate.id != base->estimate.id) break;
        knee = r->p;
    }
    return knee;
}

std::string prune_csv(const std::vector<PruneRow>& rows) {
    std::ostringstream o;
    o << "p,masked,loss,id,gap_ratio,no_gap\n";
    for (const auto& r : rows)
        o << fmt(r.p) << ',' << r.masked << ',' << fmt(r.loss) << ',' << r.estimate.id << ','
          << fmt(r.estimate.gap_ratio) << ',' << (r.estimate.no_gap ? 1 : 0) << '\n';
    return o.str();
}

std::string prune_svg(const std::vector<PruneRow>& rows) {
    SvgChart c;
    c.title = "pruning sweep";
    c.x_label = "p (index in sweep)";
    c.y_label = "value";
    c.log_y = true;
    SvgSeries loss{"reconstruction loss", {}, {}, "#1f77b4"};
    SvgSeries ids{"estimated ID", {}, {}, "#2ca02c"};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        loss.x.push_back(static_cast<double>(i));
        loss.y.push_back(rows[i].loss);
        ids.x.push_back(static_cast<double>(i));
        ids.y.push_back(static_cast<double>(rows[i].estimate.id));
    }
    c.series = {loss, ids};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::ostringstream l;
        l << rows[i].p;
        c.markers.push_back({static_cast<double>(i), l.str()});
    }
    return render_svg(c);
}

// Table 1 ---------------------------------------------------------------------

std::vector<Table1Row> run_table1(const Matrix& images, const Matrix& sinograms, const VaeModel& w_images,
                                  const VaeModel& w_sinograms, const Table1Config& cfg) {
    if (images.rows() != sinograms.rows()) throw DimensionError("table: unpaired datasets");
    IdConfig idc = cfg.id.config;
    idc.sample_size = cfg.sample_size;
    idc.seed = cfg.seed;
    const auto idx = subsample_indices(images.rows(), std::min(cfg.sample_size, images.rows()), cfg.seed);
    auto take = [&](const Matrix& m) {
        Matrix out(idx.size(), m.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
        return out;
    };
    const Matrix si = take(images), ss = take(sinograms);
    std::vector<Table1Row> rows;
    rows.push_back({"lPCA", id_lpca(si, cfg.lpca_k, cfg.lpca_theta), id_lpca(ss, cfg.lpca_k, cfg.lpca_theta)});
    rows.push_back({"MLE", id_mle(si, cfg.mle_k1, cfg.mle_k2), id_mle(ss, cfg.mle_k1, cfg.mle_k2)});
    rows.push_back({"CorrID", id_corrdim(si).dimension, id_corrdim(ss).dimension});
    rows.push_back({"ours", static_cast<double>(dataset_id(w_images, images, idc, cfg.id.side).id),
                    static_cast<double>(dataset_id(w_sinograms, sinograms, idc, cfg.id.side).id)});
    return rows;
}

std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream o;
    o << "method,images,sinograms\n";
    for (const auto& r : rows) o << r.method << ',' << fmt(r.images) << ',' << fmt(r.sinograms) << '\n';
    return o.str();
}

std::vector<Table1Row> parse_table1_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "method,images,sinograms") throw FormatError("table: bad CSV header");
    std::vector<Table1Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Table1Row r;
        std::string a, b;
        if (!std::getline(ls, r.method, ',') || !std::getline(ls, a, ',') || !std::getline(ls, b))
            throw FormatError("table: malformed row '" + line + "'");
        try {
            r.images = std::stod(a);
            r.sinograms = std::stod(b);
        } catch (const std::exception&) {
            throw FormatError("table: non-numeric entry in '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

// Plots and files -------------------------------------------------------------

std::string spectrum_svg(const IdEstimate& est, const std::string& title) {
    if (est.mean_spectrum.values.empty()) throw DimensionError("spectrum plot: empty estimate");
    SvgChart c;
    c.title = title;
    c.x_label = "eigenvalue index";
    c.y_label = "eigenvalue";
    c.log_y = true;
    SvgSeries s{"mean spectrum", {}, {}, "#1f77b4", false, true};
    for (std::size_t i = 0; i < est.mean_spectrum.values.size(); ++i) {
        s.x.push_back(static_cast<double>(i + 1));
        s.y.push_back(est.mean_spectrum.values[i]);
    }
    c.series.push_back(s);
    if (!est.no_gap) {
        std::ostringstream l;
        l << "gap, ID " << est.id;
        c.markers.push_back({static_cast<double>(est.gap_index) + 0.5, l.str()});
    }
    return render_svg(c);
}

void emit_spectrum_plot(const IdEstimate& est, const std::filesystem::path& svg_path) {
    const std::string svg = spectrum_svg(est);
    write_text(svg_path, svg);
    auto csv = svg_path;
    csv.replace_extension(".csv");
    write_text(csv, spectrum_csv(est));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream o;
    for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return o.str();
}

void write_manifest(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel != "manifest.json") files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    json list = json::array();
    for (const auto& f : files) {
        const std::string bytes = read_text(dir / f);
        list.push_back({{"path", f}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    }
    write_text(dir / "manifest.json", json{{"files", list}}.dump(2) + "\n");
}

}  // namespace manid
