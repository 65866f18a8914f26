#include "disent/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>

#include "disent/error.hpp"
#include "disent/image_io.hpp"

namespace disent {

namespace F = torch::nn::functional;

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::kSemi: return "semi";
        case TrainMode::kInfo: return "info";
        case TrainMode::kFine: return "fine";
        case TrainMode::kEncoderOnly: return "encoder_only";
        case TrainMode::kEncoderOnlyMixup: return "encoder_only_mixup";
    }
    return "semi";
}

TrainMode parse_train_mode(const std::string& text) {
    for (auto m : {TrainMode::kSemi, TrainMode::kInfo, TrainMode::kFine, TrainMode::kEncoderOnly,
                   TrainMode::kEncoderOnlyMixup})
        if (to_string(m) == text) return m;
    throw InvalidArgument("unknown training mode '" + text + "'");
}

// --- progressive schedule ---------------------------------------------------

void ProgressiveSchedule::validate(int final_resolution) const {
    if (phases.empty()) return;
    if (phases.front().start != 0) throw InvalidArgument("the first progressive phase must start at 0 images");
    if (fade_in < 0) throw InvalidArgument("fade-in length must be nonnegative");
    if (phases.front().resolution < 4 || (phases.front().resolution & (phases.front().resolution - 1)) != 0)
        throw InvalidArgument("progressive resolutions must be powers of two >= 4");
    for (std::size_t i = 1; i < phases.size(); ++i) {
        if (phases[i].resolution != 2 * phases[i - 1].resolution)
            throw InvalidArgument("progressive resolutions must ascend by factors of 2");
        if (phases[i].start - phases[i - 1].start < (i > 1 ? fade_in : 1))
            throw InvalidArgument("each progressive phase must outlast the fade-in window");
    }
    if (phases.back().resolution != final_resolution)
        throw InvalidArgument("the progressive schedule must end at the network resolution");
}

nlohmann::json ProgressiveSchedule::to_json() const {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& ph : phases) p.push_back({{"resolution", ph.resolution}, {"start", ph.start}});
    return {{"phases", p}, {"fade_in", fade_in}};
}

ProgressiveSchedule ProgressiveSchedule::from_json(const nlohmann::json& j) {
    ProgressiveSchedule s;
    if (j.is_null()) return s;
    s.fade_in = j.value("fade_in", std::int64_t{0});
    for (const auto& p : j.value("phases", nlohmann::json::array()))
        s.phases.push_back({p.at("resolution").get<int>(), p.at("start").get<std::int64_t>()});
    return s;
}

ProgressiveSchedule ProgressiveSchedule::doubling(int start_res, int final_res, std::int64_t per_phase) {
    ProgressiveSchedule s;
    std::int64_t start = 0;
    for (int r = start_res; r <= final_res; r *= 2, start += per_phase) s.phases.push_back({r, start});
    s.fade_in = per_phase / 2;
    return s;
}

PhaseState progressive_phase(const ProgressiveSchedule& schedule, std::int64_t images_seen) {
    if (schedule.phases.empty()) return {0, 1.0};
    std::size_t i = 0;
    while (i + 1 < schedule.phases.size() && schedule.phases[i + 1].start <= images_seen) ++i;
    PhaseState s{schedule.phases[i].resolution, 1.0};
    if (i > 0 && schedule.fade_in > 0) {
        const double t = static_cast<double>(images_seen - schedule.phases[i].start) /
                         static_cast<double>(schedule.fade_in);
        s.fade = std::clamp(t, 0.0, 1.0);
    }
    return s;
}

// --- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0,1]");
    weights.validate();
    network.validate();
    if (optim.batch < 1) throw InvalidArgument("batch size must be positive");
    if (!(optim.lr_g > 0 && optim.lr_de > 0)) throw InvalidArgument("learning rates must be positive");
    if (total_images <= 0) throw InvalidArgument("total_images must be positive");
    if (eval_every < 0 || checkpoint_every < 0) throw InvalidArgument("cadences must be nonnegative");
    if ((mode == TrainMode::kFine) != network.is_fine())
        throw InvalidArgument("mode=fine requires (and is required by) a network with a fine cutoff");
    if (network.is_fine() && schedule.enabled())
        throw InvalidArgument("the fine variant trains without progressive growing");
    schedule.validate(network.resolution);
    if ((mode == TrainMode::kEncoderOnly || mode == TrainMode::kEncoderOnlyMixup) && !(eta > 0))
        throw InvalidArgument("encoder-only baselines need eta > 0 (no labels to fit)");
    metrics.validate();
}

TrainConfig TrainConfig::effective() const {
    TrainConfig c = *this;
    if (mode == TrainMode::kInfo) {
        c.eta = 0.0;
        c.weights.beta = 0.0;
        c.weights.alpha = 0.0;
        c.weights.gamma_e = c.weights.gamma_g;
    }
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"name", name},
            {"dataset_dir", dataset_dir.string()},
            {"eta", eta},
            {"weights", weights.to_json()},
            {"network", network.to_json()},
            {"optim",
             {{"lr_g", optim.lr_g},
              {"lr_de", optim.lr_de},
              {"beta1", optim.beta1},
              {"beta2", optim.beta2},
              {"batch", optim.batch}}},
            {"schedule", schedule.to_json()},
            {"total_images", total_images},
            {"eval_every", eval_every},
            {"checkpoint_every", checkpoint_every},
            {"seed", seed},
            {"mode", to_string(mode)},
            {"metrics", metrics.to_json()},
            {"eval_seed", eval_seed},
            {"eval_factor_score", eval_factor_score},
            {"oracle_path", oracle_path.string()},
            {"run_root", run_root.string()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.name = j.value("name", c.name);
        c.dataset_dir = j.value("dataset_dir", std::string());
        c.eta = j.value("eta", c.eta);
        if (j.contains("weights")) c.weights = LossWeights::from_json(j.at("weights"));
        if (j.contains("network")) c.network = NetworkConfig::from_json(j.at("network"));
        if (j.contains("optim")) {
            const auto& o = j.at("optim");
            c.optim.lr_g = o.value("lr_g", c.optim.lr_g);
            c.optim.lr_de = o.value("lr_de", c.optim.lr_de);
            c.optim.beta1 = o.value("beta1", c.optim.beta1);
            c.optim.beta2 = o.value("beta2", c.optim.beta2);
            c.optim.batch = o.value("batch", c.optim.batch);
        }
        if (j.contains("schedule")) c.schedule = ProgressiveSchedule::from_json(j.at("schedule"));
        c.total_images = j.value("total_images", c.total_images);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.seed = j.value("seed", c.seed);
        c.mode = parse_train_mode(j.value("mode", std::string("semi")));
        if (j.contains("metrics")) c.metrics = MetricConfig::from_json(j.at("metrics"));
        c.eval_seed = j.value("eval_seed", c.eval_seed);
        c.eval_factor_score = j.value("eval_factor_score", c.eval_factor_score);
        c.oracle_path = j.value("oracle_path", std::string());
        c.run_root = j.value("run_root", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed training config: ") + e.what());
    }
    return c;
}

std::string TrainConfig::digest() const {
    auto j = effective().to_json();
    j.erase("run_root");
    return sha256_hex(j.dump());
}

std::filesystem::path TrainConfig::run_dir() const {
    std::filesystem::path root = run_root;
    if (root.empty()) {
        const char* env = std::getenv("DISENT_RUN_DIR");
        root = env && *env ? std::filesystem::path(env) : std::filesystem::path("run");
    }
    return root / name;
}

nlohmann::json StepStats::to_json() const {
    return {{"step", step},     {"images_seen", images_seen}, {"resolution", resolution}, {"fade", fade},
            {"loss_g", loss_g}, {"loss_de", loss_de},         {"gan_g", gan_g},           {"gan_de", gan_de},
            {"r1", r1},         {"unsup_g", unsup_g},         {"unsup_de", unsup_de},     {"sup", sup},
            {"sr_g", sr_g},     {"sr_de", sr_de}};
}

const MetricReport& RunRecord::final_report() const {
    if (reports.empty()) throw InvalidArgument("run '" + name + "' has no reports");
    return reports.back().second;
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& [step, r] : reports) reps.push_back({{"step", step}, {"report", r.to_json()}});
    nlohmann::json ckpts = nlohmann::json::array();
    for (const auto& p : checkpoints) ckpts.push_back(p.string());
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& s : losses) curve.push_back(s.to_json());
    return {{"name", name},       {"dir", dir.string()}, {"config_digest", config_digest},
            {"reports", reps},    {"checkpoints", ckpts}, {"losses", curve}};
}

// --- trainer ----------------------------------------------------------------

namespace {

bool encoder_only(TrainMode m) { return m == TrainMode::kEncoderOnly || m == TrainMode::kEncoderOnlyMixup; }

std::vector<int> code_columns(const NetworkConfig& net, int k) {
    if (net.is_fine()) return net.fine_factors;
    std::vector<int> cols(static_cast<std::size_t>(k));
    std::iota(cols.begin(), cols.end(), 0);
    return cols;
}

torch::Tensor select_columns(const torch::Tensor& codes, const std::vector<int>& cols) {
    std::vector<std::int64_t> c(cols.begin(), cols.end());
    return codes.index_select(1, torch::tensor(c, torch::kInt64));
}

OptimizerPair make_optimizers(ModelBundle& b, const TrainConfig& cfg) {
    OptimizerPair o;
    auto g_opts = torch::optim::AdamOptions(cfg.optim.lr_g).betas({cfg.optim.beta1, cfg.optim.beta2});
    auto d_opts = torch::optim::AdamOptions(cfg.optim.lr_de).betas({cfg.optim.beta1, cfg.optim.beta2});
    o.generator = std::make_shared<torch::optim::Adam>(b.generator->parameters(), g_opts);
    std::vector<torch::Tensor> de_params;
    if (encoder_only(cfg.mode)) {
        de_params = b.de->trunk_parameters();
        for (auto& p : b.de->code_head_parameters()) de_params.push_back(p);
    } else {
        de_params = b.de->parameters();
    }
    o.de = std::make_shared<torch::optim::Adam>(de_params, d_opts);
    return o;
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.detach().item<double>() : 0.0; }

void guard_finite(const torch::Tensor& loss, std::int64_t step, const char* what) {
    const double v = loss.detach().item<double>();
    if (!std::isfinite(v))
        throw DivergenceError(step, std::string("non-finite ") + what + " loss at step " + std::to_string(step));
}

std::string stamp(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%08lld", static_cast<long long>(step));
    return buf;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::filesystem::create_directories(path.parent_path());
    const auto text = j.dump(2) + "\n";
    write_file(path, text.data(), text.size());
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const Dataset& dataset)
    : config_(config.effective()), dataset_(dataset), rng_(splitmix64(config.seed ^ 0x7261696e65727367ULL)) {
    config_.validate();
    if (dataset.spec().size() != config_.network.code_dim)
        throw InvalidArgument("network code_dim does not match the dataset's factor spec");
    if (dataset.resolution() != config_.network.resolution)
        throw InvalidArgument("network resolution does not match the dataset resolution");

    split_ = split_labeled(dataset.size(), config_.eta, config_.seed);
    attach_labels(split_, dataset.codes());

    const auto cols = code_columns(config_.network, dataset.spec().size());
    const auto k = static_cast<std::int64_t>(dataset.spec().size());
    auto table = torch::zeros({static_cast<std::int64_t>(split_.labeled.size()), k}, torch::kFloat64);
    for (std::size_t i = 0; i < split_.labeled.size(); ++i)
        table[static_cast<std::int64_t>(i)] = split_.labeled[i].code.to_tensor(torch::kFloat64);
    labeled_code_table_ = select_columns(table, cols).to(torch::kFloat32);

    real_pool_ = split_.unlabeled;
    if (real_pool_.empty()) {
        real_pool_.resize(static_cast<std::size_t>(dataset.size()));
        std::iota(real_pool_.begin(), real_pool_.end(), 0);
    }

    bundle_ = ModelBundle::create(config_.network, dataset.spec(), config_.seed);
    bundle_.extra = {{"train_config", config_.to_json()}, {"config_digest", config_.digest()}};
    optimizers_ = make_optimizers(bundle_, config_);
}

std::unique_ptr<Trainer> Trainer::resume(const TrainConfig& config, const Dataset& dataset,
                                         const std::filesystem::path& checkpoint) {
    auto t = std::make_unique<Trainer>(config, dataset);
    auto loaded = load_checkpoint(checkpoint, &dataset.spec());
    if (!(loaded.config == t->config_.network))
        throw CheckpointError("checkpoint network config differs from the training config");
    t->bundle_ = std::move(loaded);
    t->optimizers_ = make_optimizers(t->bundle_, t->config_);
    if (!load_optimizer_state(checkpoint, t->optimizers_))
        throw CheckpointError("checkpoint carries no optimizer state; cannot resume training");
    t->rng_.set_state(t->bundle_.rng_state);
    return t;
}

void Trainer::save(const std::filesystem::path& path) {
    bundle_.rng_state = rng_.state();
    bundle_.extra = {{"train_config", config_.to_json()}, {"config_digest", config_.digest()}};
    save_checkpoint(path, bundle_, &optimizers_);
}

torch::Tensor Trainer::real_batch(int resolution) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(config_.optim.batch));
    for (auto& i : idx) i = real_pool_[rng_.uniform_int(real_pool_.size())];
    auto x = dataset_.images(idx);
    return resolution < dataset_.resolution() ? downsample(x, resolution) : x;
}

std::vector<std::int64_t> Trainer::labeled_draw(std::int64_t count) {
    const auto n = split_.labeled.size();
    std::vector<std::int64_t> rows(static_cast<std::size_t>(count));
    if (n >= static_cast<std::size_t>(count)) {
        std::vector<std::int64_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::swap(perm[i], perm[i + rng_.uniform_int(n - i)]);
            rows[i] = perm[i];
        }
    } else {
        for (auto& r : rows) r = static_cast<std::int64_t>(rng_.uniform_int(n));
    }
    return rows;
}

torch::Tensor Trainer::labeled_images(const std::vector<std::int64_t>& rows, int resolution) {
    std::vector<std::int64_t> idx;
    idx.reserve(rows.size());
    for (auto r : rows) idx.push_back(split_.labeled[static_cast<std::size_t>(r)].index);
    auto x = dataset_.images(idx);
    return resolution < dataset_.resolution() ? downsample(x, resolution) : x;
}

torch::Tensor Trainer::labeled_codes(const std::vector<std::int64_t>& rows) {
    return labeled_code_table_.index_select(0, torch::tensor(rows, torch::kInt64));
}

StepStats Trainer::step() { return encoder_only(config_.mode) ? encoder_step() : gan_step(); }

StepStats Trainer::gan_step() {
    const auto& w = config_.weights;
    const auto& net = config_.network;
    const auto B = static_cast<std::int64_t>(config_.optim.batch);
    const bool fine = net.is_fine();
    auto phase = progressive_phase(config_.schedule, bundle_.images_seen);
    const int res = phase.resolution == 0 ? net.resolution : phase.resolution;
    const double fade = phase.fade;

    StepStats st;
    st.step = bundle_.step;
    st.resolution = res;
    st.fade = fade;

    auto real = real_batch(res);
    auto codes_full = sample_codes(bundle_.spec, B, rng_);
    auto codes = select_columns(codes_full, code_columns(net, bundle_.spec.size())).to(torch::kFloat32);
    torch::Tensor content = fine ? downsample(real, *net.fine_cutoff) : rng_.normal_tensor({B, net.z_dim});

    const bool use_labels = !split_.labeled.empty() && (w.beta > 0 || w.alpha > 0);
    torch::Tensor x_l, c_l, lam;
    if (use_labels) {
        auto rows = labeled_draw(B);
        x_l = labeled_images(rows, res);
        c_l = labeled_codes(rows);
        if (w.alpha > 0) lam = sample_mix_weights(B, w.xi, rng_);
    }

    auto& G = bundle_.generator;
    auto& DE = bundle_.de;

    // (D, E) update.
    ObjectiveTerms terms;
    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        fake = G->forward(content, codes, res, fade);
    }
    auto real_in = real.detach().requires_grad_(w.r1_gamma > 0);
    auto dr = DE->forward(real_in, res, fade);
    auto df = DE->forward(fake, res, fade);
    auto gan = gan_losses(dr.realness, df.realness, w.r1_gamma > 0 ? real_in : torch::Tensor(), w.r1_gamma);
    terms.gan_de = gan.discriminator;
    terms.unsup_de = unsup_code_loss(df.code, codes);
    if (use_labels) {
        if (w.beta > 0) terms.sup = sup_code_loss(DE->forward(x_l, res, fade).code, c_l).value;
        if (w.alpha > 0) {
            auto mixed = mix_pairs(x_l, c_l, fake, codes, lam);
            terms.sr_de = smoothness_loss(DE->forward(mixed.x_tilde, res, fade).code, mixed.c_tilde);
        }
    }
    auto l_de = assemble_objectives(terms, w).de;
    guard_finite(l_de, bundle_.step, "discriminator/encoder");
    optimizers_.de->zero_grad();
    l_de.backward();
    optimizers_.de->step();

    // G update.
    fake = G->forward(content, codes, res, fade);
    df = DE->forward(fake, res, fade);
    terms.gan_g = F::softplus(-df.realness).mean();
    terms.unsup_g = unsup_code_loss(df.code, codes);
    if (use_labels && w.alpha > 0) {
        auto mixed = mix_pairs(x_l, c_l, fake, codes, lam);
        terms.sr_g = smoothness_loss(DE->forward(mixed.x_tilde, res, fade).code, mixed.c_tilde);
    }
    auto l_g = assemble_objectives(terms, w).generator;
    guard_finite(l_g, bundle_.step, "generator");
    optimizers_.generator->zero_grad();
    l_g.backward();
    optimizers_.generator->step();

    bundle_.step += 1;
    bundle_.images_seen += B;
    st.images_seen = bundle_.images_seen;
    st.loss_de = scalar(l_de);
    st.loss_g = scalar(l_g);
    st.gan_de = scalar(terms.gan_de);
    st.gan_g = scalar(terms.gan_g);
    st.r1 = scalar(gan.r1);
    st.unsup_de = scalar(terms.unsup_de);
    st.unsup_g = scalar(terms.unsup_g);
    st.sup = scalar(terms.sup);
    st.sr_de = scalar(terms.sr_de);
    st.sr_g = scalar(terms.sr_g);
    return st;
}

StepStats Trainer::encoder_step() {
    const auto& w = config_.weights;
    const auto B = static_cast<std::int64_t>(config_.optim.batch);
    const int res = config_.network.resolution;
    StepStats st;
    st.step = bundle_.step;
    st.resolution = res;

    auto rows = labeled_draw(B);
    auto x = labeled_images(rows, res);
    auto c = labeled_codes(rows);
    auto& DE = bundle_.de;
    auto sup = code_l2(DE->forward(x).code, c);
    torch::Tensor loss = sup;
    torch::Tensor sr;
    if (config_.mode == TrainMode::kEncoderOnlyMixup && w.alpha > 0) {
        auto rows2 = labeled_draw(B);
        auto lam = sample_mix_weights(B, w.xi, rng_);
        auto mixed = mix_pairs(x, c, labeled_images(rows2, res), labeled_codes(rows2), lam);
        sr = smoothness_loss(DE->forward(mixed.x_tilde).code, mixed.c_tilde);
        loss = sup + w.alpha * sr;
    }
    guard_finite(loss, bundle_.step, "encoder");
    optimizers_.de->zero_grad();
    loss.backward();
    optimizers_.de->step();

    bundle_.step += 1;
    bundle_.images_seen += B;
    st.images_seen = bundle_.images_seen;
    st.loss_de = scalar(loss);
    st.sup = scalar(sup);
    st.sr_de = scalar(sr);
    return st;
}

RunRecord Trainer::run() {
    RunRecord record;
    record.name = config_.name;
    record.dir = config_.run_dir();
    record.config_digest = config_.digest();
    std::filesystem::create_directories(record.dir / "reports");
    std::filesystem::create_directories(record.dir / "checkpoints");
    auto cfg_json = config_.to_json();
    cfg_json["config_digest"] = record.config_digest;
    write_json(record.dir / "config.json", cfg_json);

    const bool gen_metrics = !encoder_only(config_.mode) && !config_.network.is_fine();
    std::optional<OracleEncoder> oracle;
    EvalOptions eval_opts;
    eval_opts.metrics = config_.metrics;
    eval_opts.seed = config_.eval_seed;
    eval_opts.generator_metrics = gen_metrics;
    eval_opts.factor_score = config_.eval_factor_score;

    auto do_eval = [&](const std::string& tag) {
        if (gen_metrics && !oracle) oracle = load_oracle(config_.oracle_path, config_.network.resolution);
        auto report = evaluate(bundle_, dataset_, oracle ? &*oracle : nullptr, eval_opts);
        report.meta["config_digest"] = record.config_digest;
        report.meta["mode"] = to_string(config_.mode);
        report.meta["eta"] = config_.eta;
        report.meta["labeled"] = split_.labeled.size();
        if (config_.mode == TrainMode::kEncoderOnlyMixup) report.meta["mixup_pairs"] = "labeled-labeled";
        write_json(record.dir / "reports" / (tag + ".json"), report.to_json());
        record.reports.emplace_back(bundle_.step, std::move(report));
    };
    auto do_ckpt = [&](const std::string& tag) {
        auto path = record.dir / "checkpoints" / (tag + ".ckpt");
        save(path);
        record.checkpoints.push_back(path);
    };
    auto crossed = [](std::int64_t before, std::int64_t after, std::int64_t every) {
        return every > 0 && before / every != after / every;
    };

    const char* verbose_env = std::getenv("DISENT_VERBOSE");
    const bool verbose = verbose_env && *verbose_env && std::string(verbose_env) != "0";
    const auto t0 = std::chrono::steady_clock::now();
    while (bundle_.images_seen < config_.total_images) {
        const auto before = bundle_.images_seen;
        auto st = step();
        record.losses.push_back(st);
        if (verbose && st.step % 20 == 0)
            std::cerr << config_.name << " step " << st.step << " res " << st.resolution << " L_G " << st.loss_g
                      << " L_DE " << st.loss_de << " unsup " << st.unsup_g << " sup " << st.sup << " t "
                      << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << "s\n";
        const bool last = bundle_.images_seen >= config_.total_images;
        if (!last && crossed(before, bundle_.images_seen, config_.checkpoint_every)) do_ckpt(stamp(bundle_.step));
        if (!last && crossed(before, bundle_.images_seen, config_.eval_every)) do_eval(stamp(bundle_.step));
    }
    do_ckpt("final");
    do_eval("final");

    std::ofstream curve(record.dir / "losses.jsonl");
    for (const auto& s : record.losses) curve << s.to_json().dump() << "\n";
    auto summary = record.to_json();
    summary.erase("losses");
    write_json(record.dir / "record.json", summary);
    return record;
}

// --- evaluation -------------------------------------------------------------

namespace {

torch::Tensor encode_indices(DiscriminatorEncoder& de, const Dataset& dataset, const std::vector<std::int64_t>& idx,
                             std::int64_t batch) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(batch)) {
        const auto end = std::min(idx.size(), i + static_cast<std::size_t>(batch));
        std::vector<std::int64_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(i),
                                        idx.begin() + static_cast<std::ptrdiff_t>(end));
        parts.push_back(de->forward(dataset.images(chunk)).code.to(torch::kFloat64));
    }
    return torch::cat(parts, 0);
}

std::vector<std::int64_t> draw_indices(std::int64_t n, std::int64_t size, Rng& rng) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(size)));
    return idx;
}

}  // namespace

MetricReport evaluate(ModelBundle& bundle, const Dataset& dataset, const OracleEncoder* oracle,
                      const EvalOptions& options) {
    options.metrics.validate();
    if (!(bundle.spec == dataset.spec())) throw InvalidArgument("model factor spec does not match the dataset");
    if (bundle.config.resolution != dataset.resolution())
        throw InvalidArgument("model resolution does not match the dataset");
    const auto& mc = options.metrics;
    const auto cols = code_columns(bundle.config, bundle.spec.size());
    auto de = bundle.de;

    MetricReport report;
    report.meta = {{"n_mig", mc.n_mig},
                   {"n_l2", mc.n_l2},
                   {"bins", mc.bins},
                   {"seed", options.seed},
                   {"step", bundle.step},
                   {"images_seen", bundle.images_seen},
                   {"factors", bundle.spec.names()}};
    if (bundle.config.is_fine()) report.meta["fine_factors"] = bundle.config.fine_factors;

    Rng mig_rng(splitmix64(options.seed));
    auto mig_idx = draw_indices(mc.n_mig, dataset.size(), mig_rng);
    auto mig_codes = select_columns(dataset.codes().index_select(0, torch::tensor(mig_idx)), cols);
    auto m = mig(encode_indices(de, dataset, mig_idx, mc.batch), mig_codes, mc.bins);
    report.mig = m.score;
    report.mi_matrix = to_rows(m.info.mi);
    report.meta["mig_top_dims"] = m.top;
    report.meta["mig_gaps"] = m.gaps;
    report.meta["factor_entropy"] = to_rows(m.info.entropy.unsqueeze(0))[0];

    Rng l2_rng(splitmix64(options.seed + 1));
    auto l2_idx = draw_indices(mc.n_l2, dataset.size(), l2_rng);
    auto l2_codes = select_columns(dataset.codes().index_select(0, torch::tensor(l2_idx)), cols);
    report.l2 = l2_score(encode_indices(de, dataset, l2_idx, mc.batch), l2_codes);

    if (options.factor_score && !bundle.config.is_fine() && dataset.exhaustive()) {
        Rng fs_rng(splitmix64(options.seed + 2));
        RepresentationFn represent = [&](const torch::Tensor& codes) {
            auto c = codes.to(torch::kFloat64).contiguous();
            std::vector<std::int64_t> idx(static_cast<std::size_t>(c.size(0)));
            for (std::int64_t i = 0; i < c.size(0); ++i)
                idx[static_cast<std::size_t>(i)] = dataset.index_of(FactorCode::from_tensor(c[i]));
            return encode_indices(de, dataset, idx, mc.batch);
        };
        auto fs = factor_score(represent, bundle.spec, mc, fs_rng);
        report.factor_score = fs.score;
        report.meta["factor_score_excluded_dims"] = fs.excluded_dims;
        report.meta["factor_score_vote_batch"] = mc.factor_score_vote_batch;
    }

    if (options.generator_metrics && !bundle.config.is_fine()) {
        if (!oracle) throw InvalidArgument("generator metrics need an oracle encoder");
        auto gen = bundle.generator;
        GeneratorFn g = [gen](const torch::Tensor& z, const torch::Tensor& c) mutable {
            return gen->forward(z, c.to(torch::kFloat32));
        };
        Rng gen_rng(splitmix64(options.seed + 3));
        auto mg = mig_gen(g, *oracle, bundle.config.z_dim, mc, gen_rng);
        Rng l2g_rng(splitmix64(options.seed + 4));
        report.mig_gen = mg.score;
        report.l2_gen = l2_gen(g, *oracle, bundle.config.z_dim, mc, l2g_rng);
        report.meta["oracle"] = oracle->name();
        report.meta["oracle_max_rms"] = oracle->max_rms();
        report.meta["mi_matrix_gen"] = to_rows(mg.info.mi);
        report.meta["mig_gen_gaps"] = mg.gaps;
    }
    return report;
}

MetricReport evaluate(const std::filesystem::path& checkpoint, const Dataset& dataset, const OracleEncoder* oracle,
                      const EvalOptions& options) {
    auto bundle = load_checkpoint(checkpoint, &dataset.spec());
    auto report = evaluate(bundle, dataset, oracle, options);
    report.meta["checkpoint_digest"] = checkpoint_digest(checkpoint);
    return report;
}

OracleEncoder load_oracle(const std::filesystem::path& path, int resolution) {
    if (path.empty()) return analytic_oracle(resolution);
    auto o = LearnedOracle::load(path);
    if (o.image_resolution != resolution) throw InvalidArgument("oracle resolution does not match the dataset");
    return o.encoder();
}

// --- drivers ----------------------------------------------------------------

RunRecord train(const TrainConfig& config) {
    auto dataset = Dataset::load(config.dataset_dir);
    dataset.preload();
    return train(config, dataset);
}

RunRecord train(const TrainConfig& config, const Dataset& dataset) {
    if (encoder_only(config.mode)) return train_encoder_baseline(config, dataset);
    Trainer t(config, dataset);
    return t.run();
}

RunRecord train_encoder_baseline(const TrainConfig& config, const Dataset& dataset) {
    if (!encoder_only(config.mode))
        throw InvalidArgument("train_encoder_baseline needs mode encoder_only or encoder_only_mixup");
    if (!(config.eta > 0)) throw InvalidArgument("encoder-only baselines need eta > 0 (no labels to fit)");
    Trainer t(config, dataset);
    return t.run();
}

std::vector<RunRecord> sweep_eta(const TrainConfig& base, const std::vector<double>& etas) {
    if (etas.empty()) throw InvalidArgument("eta sweep needs at least one eta");
    auto dataset = Dataset::load(base.dataset_dir);
    dataset.preload();
    std::vector<RunRecord> runs;
    for (double eta : etas) {
        TrainConfig c = base;
        c.eta = eta;
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, eta);
        c.name = base.name + "_eta" + std::string(buf, res.ptr);
        runs.push_back(train(c, dataset));
    }
    return runs;
}

}  // namespace disent
