// manid: dataset generation, training, ID estimation and reporting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "manid/atlas.hpp"
#include "manid/baselines.hpp"
#include "manid/bridge.hpp"
#include "manid/errors.hpp"
#include "manid/experiments.hpp"

namespace fs = std::filesystem;
using namespace manid;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string kind;  // preset used when no config is given
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "global seed");
    app->add_option("--out-dir", c.out_dir, "run directory");
}

ExperimentConfig base_config(const Common& c, const std::string& fallback_kind) {
    ExperimentConfig cfg;
    if (!c.config.empty()) cfg = load_config(c.config);
    else cfg = ExperimentConfig::preset(c.kind.empty() ? fallback_kind : c.kind);
    if (c.seed) cfg.apply_seed(*c.seed);
    if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
    return cfg;
}

void finish_run(const ExperimentConfig& cfg) {
    write_text(cfg.out_dir / "config.json", config_to_json(cfg));
    write_manifest(cfg.out_dir);
}

VaeModel read_vae(const std::string& path) { return load_vae(Container::read(path)); }

LabeledDataset data_or_generate(const std::string& path, const ExperimentConfig& cfg) {
    if (!path.empty()) return load_dataset(path);
    return make_dataset(cfg.dataset, cfg.seed);
}

std::string bridge_trace_csv(const BridgeTraining& t) {
    std::ostringstream o;
    o << "epoch,forward_mse,inverse_mse\n";
    for (const auto& e : t.trace)
        o << e.epoch << ',' << format_exact(e.forward_mse) << ',' << format_exact(e.inverse_mse) << '\n';
    return o.str();
}

std::string atlas_trace_csv(const MixtureAtlas& a) {
    std::ostringstream o;
    o << "epoch,loss";
    for (std::size_t k = 0; k < a.size(); ++k) o << ",weight" << k;
    o << '\n';
    for (const auto& e : a.trace) {
        o << e.epoch << ',' << format_exact(e.loss);
        for (double w : e.weights) o << ',' << format_exact(w);
        o << '\n';
    }
    return o.str();
}

double per_pixel_mse(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        s += d * d;
    }
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

// Montage of square images as a binary 8-bit PGM.
std::string montage_pgm(const Matrix& images, std::size_t per_row) {
    const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(images.cols()))));
    if (side * side != images.cols()) throw DimensionError("montage needs square images");
    const std::size_t rows = (images.rows() + per_row - 1) / per_row, pad = 1;
    const std::size_t W = per_row * (side + pad) + pad, H = rows * (side + pad) + pad;
    std::string px(W * H, '\0');
    for (std::size_t n = 0; n < images.rows(); ++n) {
        const std::size_t ox = pad + (n % per_row) * (side + pad), oy = pad + (n / per_row) * (side + pad);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const double v = std::clamp(images(n, y * side + x), 0.0, 1.0);
                px[(oy + y) * W + ox + x] = static_cast<char>(std::lround(255.0 * v));
            }
    }
    return "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n" + px;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Intrinsic dimension of data manifolds from trained autoencoders"};
    app.require_subcommand(1);

    // generate ---------------------------------------------------------------
    Common gen_c;
    std::string gen_out;
    std::optional<std::size_t> gen_n, gen_res, gen_angles, gen_offsets;
    std::optional<double> gen_sigma;
    std::string gen_norm;
    bool gen_strat = false;
    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    add_common(gen, gen_c);
    gen->add_option("--dataset", gen_c.kind, "circle | paraboloid | coule | coule-sinogram")
        ->check(CLI::IsMember({"circle", "paraboloid", "coule", "coule-sinogram"}));
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_option("--res", gen_res, "image side");
    gen->add_option("--angles", gen_angles, "sinogram angles");
    gen->add_option("--offsets", gen_offsets, "sinogram offsets");
    gen->add_option("--sigma", gen_sigma, "circle noise");
    gen->add_flag("--stratified", gen_strat, "regular circle angles");
    gen->add_option("--normalization", gen_norm, "none | global | per_feature");
    gen->add_option("--out", gen_out, "dataset file");

    // train-embedder -----------------------------------------------------------
    Common te_c;
    std::string te_data;
    std::optional<std::size_t> te_latent, te_bs;
    std::optional<double> te_beta, te_gamma, te_alpha, te_w, te_lr, te_lrf, te_jitter;
    std::optional<int> te_epochs;
    std::string te_loss, te_lasso;
    auto* te = app.add_subcommand("train-embedder", "train a beta-VAE embedder");
    add_common(te, te_c);
    te->add_option("--dataset", te_c.kind, "preset when no config is given");
    te->add_option("--data", te_data, "dataset file (generated from the config when absent)");
    te->add_option("--latent", te_latent, "latent dimension");
    te->add_option("--beta", te_beta, "KL weight");
    te->add_option("--gamma", te_gamma, "Lasso weight");
    te->add_option("--alpha", te_alpha, "Tanimoto weight");
    te->add_option("--recon-weight", te_w, "squared-error weight");
    te->add_option("--loss", te_loss, "elbo_l2 | embedding_tanimoto");
    te->add_option("--lasso-step", te_lasso, "subgradient | proximal");
    te->add_option("--epochs", te_epochs, "epochs");
    te->add_option("--batch-size", te_bs, "batch size");
    te->add_option("--lr", te_lr, "initial learning rate");
    te->add_option("--lr-final", te_lrf, "final learning rate");
    te->add_option("--jitter", te_jitter, "input jitter amplitude");

    // train-bridge ---------------------------------------------------------------
    Common tb_c;
    std::string tb_images, tb_sinos, tb_wi, tb_ws;
    std::optional<int> tb_epochs;
    auto* tb = app.add_subcommand("train-bridge", "train the latent-space Radon maps");
    add_common(tb, tb_c);
    tb->add_option("--images", tb_images, "image dataset")->required();
    tb->add_option("--sinograms", tb_sinos, "paired sinogram dataset")->required();
    tb->add_option("--w-images", tb_wi, "image embedder")->required();
    tb->add_option("--w-sinograms", tb_ws, "sinogram embedder")->required();
    tb->add_option("--epochs", tb_epochs, "epochs");

    // train-atlas --------------------------------------------------------------
    Common ta_c;
    std::string ta_data, ta_emb;
    std::optional<std::size_t> ta_k, ta_d;
    std::optional<int> ta_epochs;
    auto* ta = app.add_subcommand("train-atlas", "fit a mixture of invertible charts");
    add_common(ta, ta_c);
    ta->add_option("--data", ta_data, "dataset file")->required();
    ta->add_option("--embedder", ta_emb, "embed the data with this model first");
    ta->add_option("--components", ta_k, "number of charts");
    ta->add_option("--chart-dim", ta_d, "chart dimension");
    ta->add_option("--epochs", ta_epochs, "epochs");

    // estimate-id ----------------------------------------------------------------
    Common ei_c;
    std::string ei_model, ei_data, ei_side;
    std::optional<double> ei_rho, ei_floor;
    std::optional<std::size_t> ei_n;
    auto* ei = app.add_subcommand("estimate-id", "estimate the intrinsic dimension from a trained model");
    add_common(ei, ei_c);
    ei->add_option("--model", ei_model, "trained embedder")->required();
    ei->add_option("--data", ei_data, "dataset file")->required();
    ei->add_option("--side", ei_side, "encoder_gram | decoder_pullback");
    ei->add_option("--rho", ei_rho, "minimal gap ratio");
    ei->add_option("--floor", ei_floor, "null eigenvalue floor relative to the largest");
    ei->add_option("--n", ei_n, "sample size");

    // baselines ------------------------------------------------------------------
    Common bl_c;
    std::string bl_data, bl_images, bl_sinos, bl_wi, bl_ws;
    std::optional<std::size_t> bl_n;
    auto* bl = app.add_subcommand("baselines", "classical ID estimators, or the full comparison table");
    add_common(bl, bl_c);
    bl->add_option("--data", bl_data, "single dataset");
    bl->add_option("--images", bl_images, "image dataset (comparison table)");
    bl->add_option("--sinograms", bl_sinos, "sinogram dataset (comparison table)");
    bl->add_option("--w-images", bl_wi, "image embedder (comparison table)");
    bl->add_option("--w-sinograms", bl_ws, "sinogram embedder (comparison table)");
    bl->add_option("--n", bl_n, "sample size");

    // prune-sweep ----------------------------------------------------------------
    Common ps_c;
    std::string ps_model, ps_data;
    std::vector<double> ps_p;
    auto* ps = app.add_subcommand("prune-sweep", "global magnitude pruning sweep");
    add_common(ps, ps_c);
    ps->add_option("--model", ps_model, "trained embedder")->required();
    ps->add_option("--data", ps_data, "dataset file")->required();
    ps->add_option("--p", ps_p, "pruning ratios")->delimiter(',');

    // reconstruct ----------------------------------------------------------------
    Common rc_c;
    std::string rc_pipe, rc_data;
    auto* rc = app.add_subcommand("reconstruct", "reconstruct images through the latent Radon maps");
    add_common(rc, rc_c);
    rc->add_option("--pipeline", rc_pipe, "trained pipeline")->required();
    rc->add_option("--data", rc_data, "image dataset")->required();

    // chart-grid -----------------------------------------------------------------
    Common cg_c;
    std::string cg_atlas, cg_emb;
    std::size_t cg_chart = 0, cg_count = 5;
    double cg_step = 0.2;
    auto* cg = app.add_subcommand("chart-grid", "decode a regular grid of one chart");
    add_common(cg, cg_c);
    cg->add_option("--atlas", cg_atlas, "trained atlas")->required();
    cg->add_option("--embedder", cg_emb, "decode chart points to the ambient space with this model");
    cg->add_option("--chart", cg_chart, "chart index");
    cg->add_option("--step", cg_step, "grid step");
    cg->add_option("--count", cg_count, "points per axis");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto cfg = base_config(gen_c, "circle");
            if (gen_n) cfg.dataset.n = *gen_n;
            if (gen_res) cfg.dataset.res = *gen_res;
            if (gen_angles) cfg.dataset.angles = *gen_angles;
            if (gen_offsets) cfg.dataset.offsets = *gen_offsets;
            if (gen_sigma) cfg.dataset.sigma = *gen_sigma;
            if (gen_strat) cfg.dataset.stratified = true;
            if (!gen_norm.empty()) cfg.dataset.normalization = normalization_mode_from_string(gen_norm);
            if (gen_c.out_dir.empty() && !gen_out.empty())
                cfg.out_dir = fs::path(gen_out).has_parent_path() ? fs::path(gen_out).parent_path() : fs::path(".");
            cfg.validate();
            const auto ds = make_dataset(cfg.dataset, cfg.seed);
            const fs::path out = gen_out.empty() ? cfg.out_dir / "dataset.bin" : fs::path(gen_out);
            fs::create_directories(cfg.out_dir);
            save_dataset(ds, out);
            std::cout << "wrote " << ds.size() << " x " << ds.dim() << " samples to " << out.string() << "\n";
            finish_run(cfg);
        } else if (*te) {
            auto cfg = base_config(te_c, "circle");
            if (te_latent) cfg.model.latent_dim = *te_latent;
            if (te_beta) cfg.train.beta = *te_beta;
            if (te_gamma) cfg.train.gamma = *te_gamma;
            if (te_alpha) cfg.train.alpha = *te_alpha;
            if (te_w) cfg.train.recon_weight = *te_w;
            if (!te_loss.empty()) cfg.train.loss = loss_kind_from_string(te_loss);
            if (!te_lasso.empty()) cfg.train.lasso_step = lasso_step_from_string(te_lasso);
            if (te_epochs) cfg.train.epochs = *te_epochs;
            if (te_bs) cfg.train.batch_size = *te_bs;
            if (te_lr) cfg.train.lr = *te_lr;
            if (te_lrf) cfg.train.lr_final = *te_lrf;
            if (te_jitter) cfg.train.jitter = *te_jitter;
            cfg.validate();
            const auto ds = data_or_generate(te_data, cfg);
            const auto model = train_vae(ds.samples, make_architecture(cfg.model, ds.dim()), cfg.train,
                                         [&](const EpochRecord& r) {
                                             if (r.epoch % 10 == 0 || r.epoch + 1 == cfg.train.epochs)
                                                 std::fprintf(stderr, "epoch %d loss %.6g\n", r.epoch, r.terms.total);
                                         });
            fs::create_directories(cfg.out_dir);
            save_vae(model).write(cfg.out_dir / "embedder.ckpt");
            write_text(cfg.out_dir / "loss_trace.csv", loss_trace_csv(model.trace));
            std::cout << "reconstruction error " << mean_reconstruction_error(model, ds.samples) << "\n";
            finish_run(cfg);
        } else if (*tb) {
            auto cfg = base_config(tb_c, "coule");
            if (tb_epochs) cfg.bridge.epochs = *tb_epochs;
            cfg.validate();
            const auto images = load_dataset(tb_images), sinos = load_dataset(tb_sinos);
            BridgePipeline p{read_vae(tb_wi), read_vae(tb_ws), {}, {}};
            auto t = train_bridge(images.samples, sinos.samples, p.w_images, p.w_sinograms, cfg.bridge);
            p.r_fwd = std::move(t.forward);
            p.r_inv = std::move(t.inverse);
            fs::create_directories(cfg.out_dir);
            save_pipeline(p).write(cfg.out_dir / "pipeline.ckpt");
            write_text(cfg.out_dir / "bridge_trace.csv", bridge_trace_csv(t));
            const Matrix zi = p.w_images.encode_mean_batch(images.samples);
            const Matrix zs = p.w_sinograms.encode_mean_batch(sinos.samples);
            std::cout << "latent mse forward " << t.initial_forward_mse << " -> " << latent_mse(p.r_fwd, zi, zs)
                      << ", inverse " << t.initial_inverse_mse << " -> " << latent_mse(p.r_inv, zs, zi) << "\n";
            finish_run(cfg);
        } else if (*ta) {
            auto cfg = base_config(ta_c, "coule");
            if (ta_k) cfg.atlas.components = *ta_k;
            if (ta_d) cfg.atlas.chart_dim = *ta_d;
            if (ta_epochs) cfg.atlas.epochs = *ta_epochs;
            cfg.validate();
            const auto ds = load_dataset(ta_data);
            const Matrix x = ta_emb.empty() ? ds.samples : read_vae(ta_emb).encode_mean_batch(ds.samples);
            const auto atlas = train_mixture(x, cfg.atlas);
            fs::create_directories(cfg.out_dir);
            save_atlas(atlas).write(cfg.out_dir / "atlas.ckpt");
            write_text(cfg.out_dir / "atlas_trace.csv", atlas_trace_csv(atlas));
            std::cout << "mixture loss " << atlas.initial_loss << " -> " << mixture_loss(atlas, x) << "\n";
            finish_run(cfg);
        } else if (*ei) {
            auto cfg = base_config(ei_c, "circle");
            if (!ei_side.empty()) cfg.id.side = metric_side_from_string(ei_side);
            if (ei_rho) cfg.id.config.rho = *ei_rho;
            if (ei_floor) cfg.id.config.floor = *ei_floor;
            if (ei_n) cfg.id.config.sample_size = *ei_n;
            cfg.validate();
            const auto model = read_vae(ei_model);
            const auto ds = load_dataset(ei_data);
            const auto est = dataset_id(model, ds.samples, cfg.id.config, cfg.id.side);
            write_text(cfg.out_dir / "id_report.txt", id_report(est));
            emit_spectrum_plot(est, cfg.out_dir / "spectrum.svg");
            std::cout << "id " << est.id << (est.no_gap ? " (no gap)" : "") << " gap_ratio " << est.gap_ratio << "\n";
            finish_run(cfg);
        } else if (*bl) {
            auto cfg = base_config(bl_c, "coule");
            const std::size_t n = bl_n.value_or(cfg.id.config.sample_size);
            cfg.id.config.sample_size = n;
            cfg.validate();
            if (!bl_images.empty()) {
                if (bl_sinos.empty() || bl_wi.empty() || bl_ws.empty())
                    throw ConfigError("the comparison table needs --images, --sinograms, --w-images and --w-sinograms");
                Table1Config tc;
                tc.sample_size = n;
                tc.seed = cfg.seed;
                tc.id = cfg.id;
                const auto rows = run_table1(load_dataset(bl_images).samples, load_dataset(bl_sinos).samples,
                                             read_vae(bl_wi), read_vae(bl_ws), tc);
                const std::string csv = table1_csv(rows);
                write_text(cfg.out_dir / "table1.csv", csv);
                std::cout << csv;
            } else {
                if (bl_data.empty()) throw ConfigError("baselines needs --data or the comparison-table inputs");
                const auto ds = load_dataset(bl_data);
                const auto idx = subsample_indices(ds.size(), std::min(n, ds.size()), cfg.seed);
                Matrix x(idx.size(), ds.dim());
                for (std::size_t i = 0; i < idx.size(); ++i)
                    std::copy(ds.samples.row(idx[i]).begin(), ds.samples.row(idx[i]).end(), x.row(i).begin());
                std::ostringstream csv;
                csv << "method,estimate\n";
                csv << "lPCA," << format_exact(id_lpca(x)) << "\n";
                csv << "MLE," << format_exact(id_mle(x)) << "\n";
                csv << "CorrID," << format_exact(id_corrdim(x).dimension) << "\n";
                write_text(cfg.out_dir / "baselines.csv", csv.str());
                std::cout << csv.str();
            }
            finish_run(cfg);
        } else if (*ps) {
            auto cfg = base_config(ps_c, "coule");
            if (!ps_p.empty()) cfg.prune = ps_p;
            cfg.validate();
            const auto rows = run_prune_sweep(read_vae(ps_model), load_dataset(ps_data).samples, cfg.prune, cfg.id);
            write_text(cfg.out_dir / "prune.csv", prune_csv(rows));
            write_text(cfg.out_dir / "prune.svg", prune_svg(rows));
            std::cout << prune_csv(rows);
            if (const auto knee = prune_knee(rows)) std::cout << "knee p* = " << *knee << "\n";
            else std::cout << "no knee: the unpruned row is missing\n";
            finish_run(cfg);
        } else if (*rc) {
            auto cfg = base_config(rc_c, "coule");
            cfg.validate();
            const auto p = load_pipeline(Container::read(rc_pipe));
            auto ds = load_dataset(rc_data);
            const Matrix rec = reconstruct_images(p, ds.samples);
            const double mse = per_pixel_mse(rec, ds.samples);
            const double ae = mean_squared_error(p.w_images, ds.samples);
            LabeledDataset out = ds;
            out.samples = rec;
            out.meta.name = ds.meta.name + "-reconstructed";
            fs::create_directories(cfg.out_dir);
            save_dataset(out, cfg.out_dir / "reconstructions.bin");
            std::ostringstream csv;
            csv << "metric,value\npipeline_mse," << format_exact(mse) << "\nautoencoder_mse," << format_exact(ae) << "\n";
            write_text(cfg.out_dir / "reconstruct.csv", csv.str());
            std::cout << csv.str();
            finish_run(cfg);
        } else if (*cg) {
            auto cfg = base_config(cg_c, "coule");
            cfg.validate();
            const auto atlas = load_atlas(Container::read(cg_atlas));
            Matrix grid = chart_grid_samples(atlas, cg_chart, cg_step, cg_count);
            if (!cg_emb.empty()) grid = read_vae(cg_emb).decode_batch(grid);
            LabeledDataset out;
            out.samples = grid;
            out.params = Matrix(grid.rows(), 0);
            out.meta.name = "chart-grid";
            fs::create_directories(cfg.out_dir);
            save_dataset(out, cfg.out_dir / "chart_grid.bin");
            const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(grid.cols()))));
            if (side * side == grid.cols()) write_text(cfg.out_dir / "chart_grid.pgm", montage_pgm(grid, cg_count));
            std::cout << "decoded " << grid.rows() << " grid points through chart " << cg_chart << "\n";
            finish_run(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
