#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "disent/error.hpp"
#include "disent/metrics.hpp"
#include "disent/service.hpp"
#include "disent/synth_data.hpp"
#include "disent/trainer.hpp"
#include "disent/traversal.hpp"

using namespace disent;

namespace {

// Flags shared by train and sweep-eta.
struct TrainFlags {
    std::string data, config, name = "run", out, mode = "semi", oracle, preset = "small";
    double eta = 0.01;
    std::optional<double> gamma_g, gamma_e, beta, alpha, xi;
    std::optional<int> resolution, phi, f0, z_dim;
    std::vector<int> fine_factors{SceneSpec::kObjectHue, SceneSpec::kWallHue, SceneSpec::kBrightness};
    std::uint64_t seed = 0;
    std::int64_t images = 200000;
    std::int64_t eval_every = 0, checkpoint_every = 0;
    int batch = 16;
    int progressive_start = 0;
    std::int64_t phase_images = 0;
    bool factor_score = false;
    CLI::App* app_ = nullptr;
    bool with_eta_ = true;

    void add(CLI::App* app, bool with_eta) {
        app_ = app;
        with_eta_ = with_eta;
        app->add_option("--data", data, "dataset directory")->required();
        app->add_option("--config", config, "JSON training config; flags override it");
        app->add_option("--name", name, "run name");
        app->add_option("--out", out, "run directory root (default $DISENT_RUN_DIR or ./run)");
        if (with_eta) app->add_option("--eta", eta, "supervision rate")->check(CLI::Range(0.0, 1.0));
        app->add_option("--gamma-g", gamma_g, "L_unsup weight in G");
        app->add_option("--gamma-e", gamma_e, "L_unsup weight in D/E");
        app->add_option("--beta", beta, "L_sup weight");
        app->add_option("--alpha", alpha, "smoothness weight");
        app->add_option("--xi", xi, "MixUp Beta concentration");
        app->add_option("--resolution", resolution, "expected dataset resolution");
        app->add_option("--phi", phi, "fine cutoff resolution (mode=fine)");
        app->add_option("--fine-factors", fine_factors, "factor indices edited by the fine model")->delimiter(',');
        app->add_option("--mode", mode, "semi | info | fine | encoder_only | encoder_only_mixup");
        app->add_option("--seed", seed, "training seed");
        app->add_option("--images", images, "total real images shown");
        app->add_option("--batch", batch, "batch size");
        app->add_option("--eval-every", eval_every, "evaluation cadence in images (0: end only)");
        app->add_option("--checkpoint-every", checkpoint_every, "checkpoint cadence in images (0: end only)");
        app->add_option("--preset", preset, "small | full");
        app->add_option("--f0", f0, "feature maps at resolutions <= 32");
        app->add_option("--z-dim", z_dim, "latent dimension");
        app->add_option("--progressive-start", progressive_start, "lowest progressive resolution (0: off)");
        app->add_option("--phase-images", phase_images, "images per progressive phase");
        app->add_option("--oracle", oracle, "learned oracle file (default: analytic oracle)");
        app->add_flag("--factor-score", factor_score, "also compute the Factor score at evaluation");
    }

    TrainConfig build(const DatasetManifest& manifest) const {
        const int R = manifest.resolution;
        const int K = manifest.spec.size();
        TrainConfig c;
        if (!config.empty()) {
            std::ifstream in(config);
            if (!in) throw InvalidArgument("cannot read config " + config);
            try {
                c = TrainConfig::from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::parse_error& e) {
                throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
            }
        }
        // Without a config file every flag applies, defaults included; with
        // one, only the flags given on the command line.
        auto use = [&](const char* flag) { return config.empty() || app_->count(flag) > 0; };
        if (preset != "full" && preset != "small") throw InvalidArgument("unknown preset '" + preset + "'");
        if (use("--preset")) c.network = preset == "full" ? NetworkConfig::full_preset(R, K) : NetworkConfig::small_preset(R, K);
        if (use("--name")) c.name = name;
        if (with_eta_ && use("--eta")) c.eta = eta;
        if (use("--seed")) c.seed = seed;
        if (use("--images")) c.total_images = images;
        if (use("--batch")) c.optim.batch = batch;
        if (use("--eval-every")) c.eval_every = eval_every;
        if (use("--checkpoint-every")) c.checkpoint_every = checkpoint_every;
        if (use("--mode")) c.mode = parse_train_mode(mode);
        if (f0) c.network.f_0 = *f0;
        if (z_dim) c.network.z_dim = *z_dim;
        if (c.mode == TrainMode::kFine && (use("--phi") || use("--fine-factors") || !c.network.is_fine())) {
            c.network.fine_cutoff = phi.value_or(c.network.fine_cutoff.value_or(R / 4));
            c.network.fine_factors = fine_factors;
        }
        if (use("--progressive-start") || use("--phase-images")) {
            c.schedule = {};
            if (progressive_start > 0 && c.mode != TrainMode::kFine)
                c.schedule = ProgressiveSchedule::doubling(
                    progressive_start, R,
                    phase_images > 0 ? phase_images : std::max<std::int64_t>(1, c.total_images / 4));
        }
        if (use("--factor-score")) c.eval_factor_score = factor_score;
        if (use("--oracle")) c.oracle_path = oracle;
        c.dataset_dir = data;
        if (!out.empty()) c.run_root = out;
        if (gamma_g) c.weights.gamma_g = *gamma_g;
        if (gamma_e) c.weights.gamma_e = *gamma_e;
        if (beta) c.weights.beta = *beta;
        if (alpha) c.weights.alpha = *alpha;
        if (xi) c.weights.xi = *xi;
        if (resolution && *resolution != manifest.resolution)
            throw InvalidArgument("--resolution " + std::to_string(*resolution) + " does not match dataset resolution " +
                                  std::to_string(manifest.resolution));
        c.validate();
        return c;
    }
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InvalidArgument("cannot parse '" + item + "' as a number");
        }
    }
    return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

int fail(const std::string& kind, const std::string& message) {
    std::string line = message;
    for (auto& ch : line)
        if (ch == '\n' || ch == '\r') ch = ' ';
    std::cerr << nlohmann::json{{"error", kind}, {"message", line}}.dump() << std::endl;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised disentangled StyleGAN toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "render the Shapes2D-mini dataset");
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    int gen_res = 64;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "recorded seed");
    gen->add_option("--resolution", gen_res, "32 | 64 | 128");

    // train
    auto* train_cmd = app.add_subcommand("train", "train one model");
    TrainFlags tf;
    tf.add(train_cmd, true);

    // sweep-eta
    auto* sweep = app.add_subcommand("sweep-eta", "train one model per supervision rate");
    TrainFlags sf;
    std::string etas = "0,0.0025,0.01,0.025,1.0";
    sf.add(sweep, false);
    sweep->add_option("--etas", etas, "comma-separated supervision rates");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_oracle, ev_out;
    std::uint64_t ev_seed = 1000003;
    bool ev_fs = false, ev_no_gen = false;
    eval->add_option("--checkpoint", ev_ckpt)->required();
    eval->add_option("--data", ev_data)->required();
    eval->add_option("--oracle", ev_oracle, "learned oracle file (default: analytic oracle)");
    eval->add_option("--seed", ev_seed);
    eval->add_option("--out", ev_out, "write the report JSON here");
    eval->add_flag("--factor-score", ev_fs);
    eval->add_flag("--no-generator-metrics", ev_no_gen);

    // traverse
    auto* trav = app.add_subcommand("traverse", "write a latent traversal grid");
    std::string tr_ckpt, tr_out = "traversal.png", tr_anchor, tr_image;
    int tr_factor = 0, tr_steps = 8, tr_rows = 1;
    std::uint64_t tr_seed = 0;
    trav->add_option("--checkpoint", tr_ckpt)->required();
    trav->add_option("--factor", tr_factor)->required();
    trav->add_option("--steps", tr_steps);
    trav->add_option("--out", tr_out);
    trav->add_option("--anchor", tr_anchor, "comma-separated anchor code (default: random grid codes)");
    trav->add_option("--image", tr_image, "anchor PNG (fine models)");
    trav->add_option("--rows", tr_rows, "number of random anchors");
    trav->add_option("--seed", tr_seed);

    // serve
    auto* serve = app.add_subcommand("serve", "serve a checkpoint over HTTP");
    std::string sv_ckpt, sv_host = "127.0.0.1", sv_name;
    int sv_port = 8080;
    serve->add_option("--checkpoint", sv_ckpt)->required();
    serve->add_option("--port", sv_port);
    serve->add_option("--host", sv_host);
    serve->add_option("--name", sv_name);

    // oracle-train
    auto* otrain = app.add_subcommand("oracle-train", "fit the oracle encoder on every ground-truth pair");
    std::string ot_data, ot_out = "oracle.pt";
    OracleTrainConfig ot_cfg;
    otrain->add_option("--data", ot_data)->required();
    otrain->add_option("--out", ot_out);
    otrain->add_option("--seed", ot_cfg.seed);
    otrain->add_option("--epochs", ot_cfg.epochs);
    otrain->add_option("--batch", ot_cfg.batch);
    otrain->add_option("--f0", ot_cfg.f_0);
    otrain->add_option("--lr", ot_cfg.lr);
    otrain->add_option("--working-resolution", ot_cfg.working_resolution, "downsample images to this side first");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            auto m = generate_dataset(SceneSpec(gen_res), gen_out, gen_seed);
            print_json(m.to_json());
        } else if (*train_cmd) {
            auto ds = Dataset::load(tf.data);
            ds.preload();
            auto rec = train(tf.build(ds.manifest()), ds);
            auto summary = rec.to_json();
            summary.erase("losses");
            print_json(summary);
        } else if (*sweep) {
            auto ds = Dataset::load(sf.data);
            auto base = sf.build(ds.manifest());
            nlohmann::json out = nlohmann::json::array();
            for (auto& rec : sweep_eta(base, parse_list(etas)))
                out.push_back({{"name", rec.name}, {"dir", rec.dir.string()}, {"report", rec.final_report().to_json()}});
            print_json(out);
        } else if (*eval) {
            auto ds = Dataset::load(ev_data);
            ds.preload();
            auto bundle = load_checkpoint(ev_ckpt, &ds.spec());
            EvalOptions opts;
            opts.seed = ev_seed;
            opts.factor_score = ev_fs;
            opts.generator_metrics = !ev_no_gen && !bundle.config.is_fine();
            std::optional<OracleEncoder> oracle;
            if (opts.generator_metrics) oracle = load_oracle(ev_oracle, ds.resolution());
            auto report = evaluate(bundle, ds, oracle ? &*oracle : nullptr, opts);
            report.meta["checkpoint_digest"] = checkpoint_digest(ev_ckpt);
            if (!ev_out.empty()) {
                auto text = report.to_json().dump(2) + "\n";
                write_file(ev_out, text.data(), text.size());
            }
            print_json(report.to_json());
        } else if (*trav) {
            auto bundle = load_checkpoint(tr_ckpt);
            std::vector<TraversalRow> rows;
            if (bundle.config.is_fine()) {
                if (tr_image.empty()) throw InvalidArgument("fine models need --image as the traversal anchor");
                rows.push_back(latent_traversal(bundle, to_tensor(read_png(tr_image)), tr_factor, tr_steps));
            } else if (!tr_anchor.empty()) {
                rows.push_back(latent_traversal(bundle, FactorCode(parse_list(tr_anchor)), tr_factor, tr_steps, tr_seed));
            } else {
                Rng rng(tr_seed);
                for (int r = 0; r < tr_rows; ++r)
                    rows.push_back(latent_traversal(bundle, sample_code(bundle.spec, rng), tr_factor, tr_steps,
                                                    tr_seed + static_cast<std::uint64_t>(r)));
            }
            write_png(tr_out, traversal_grid(rows));
            print_json({{"out", tr_out}, {"rows", rows.size()}, {"columns", tr_steps + 1}});
        } else if (*serve) {
            ModelService service(sv_ckpt, sv_name);
            const int port = service.bind(sv_host, sv_port);
            std::cerr << nlohmann::json{{"listening", sv_host + ":" + std::to_string(port)},
                                        {"checkpoint_digest", service.digest()}}
                             .dump()
                      << std::endl;
            service.listen();
        } else if (*otrain) {
            auto ds = Dataset::load(ot_data);
            ds.preload();
            ot_cfg.verbose = true;
            auto oracle = train_oracle_encoder(ds, ot_cfg);
            oracle.save(ot_out);
            print_json({{"out", ot_out},
                        {"heldout_rms", oracle.heldout_rms},
                        {"passes_gate", oracle.encoder().passes_gate()}});
        }
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
