// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance --suite fast                     property criteria, minutes
//   acceptance --suite training --work DIR      dataset, oracle and training runs
//
// The training suite caches the dataset, the learned oracle and every run
// under --work, keyed by configuration, so a rerun only re-reads reports.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../common/loss_probes.hpp"
#include "../common/test_util.hpp"
#include "disent/error.hpp"
#include "disent/losses.hpp"
#include "disent/metrics.hpp"
#include "disent/networks.hpp"
#include "disent/synth_data.hpp"
#include "disent/trainer.hpp"

using namespace disent;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

class Gate {
public:
    explicit Gate(std::string only) : only_(std::move(only)) {}

    void run(const std::string& name, const std::function<Outcome()>& body) {
        if (!only_.empty() && only_ != name) return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs, 3) << " s]"
                  << std::endl;
        failures_ += o.pass ? 0 : 1;
    }

    int failures() const { return failures_; }

private:
    std::string only_;
    int failures_ = 0;
};

// --- fast criteria ------------------------------------------------------------

Outcome loss_reduction_identities() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, test::reduction_identity_error(seed));
    return {worst <= 1e-6, "max deviation " + fmt(worst) + " over 20 tiny models (tol 1e-6)"};
}

Outcome gradient_checks() {
    std::map<std::string, double> worst;
    for (std::uint64_t seed = 0; seed < 3; ++seed)
        for (const auto& p : test::loss_gradient_errors(torch::kFloat32, 100 + seed, 6))
            worst[p.loss] = std::max(worst[p.loss], p.error);
    bool ok = true;
    std::string detail = "float32 relative error";
    for (const auto& [name, err] : worst) {
        ok = ok && err < 1e-3;
        detail += " " + name + "=" + fmt(err, 3);
    }
    return {ok, detail + " (tol 1e-3, R=8, 3 seeds)"};
}

Outcome mixup_properties() {
    const double xi = 0.75;
    const std::int64_t n = 1000000;
    Rng rng(77);
    auto lam = sample_mix_weights(n, xi, rng);
    const double lo = lam.min().item<double>(), hi = lam.max().item<double>();
    const double mean = lam.mean().item<double>();

    // Independent draw: Beta(xi, xi) as a ratio of gammas from the standard library.
    std::mt19937_64 gen(4242);
    std::gamma_distribution<double> gamma(xi, 1.0);
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = gamma(gen), b = gamma(gen);
        const double l = a / (a + b);
        acc += std::max(l, 1.0 - l);
    }
    const double reference = acc / static_cast<double>(n);

    torch::manual_seed(5);
    auto c = torch::rand({4096, 7}, torch::kFloat64);
    auto cg = torch::rand({4096, 7}, torch::kFloat64);
    auto x = torch::rand({4096, 3, 4, 4}) * 2 - 1;
    auto xg = torch::rand({4096, 3, 4, 4}) * 2 - 1;
    auto m = mixup_pair(x, c, xg, cg, xi, rng);
    const bool convex = ((m.c_tilde >= torch::minimum(c, cg)) & (m.c_tilde <= torch::maximum(c, cg))).all().item<bool>() &&
                        ((m.x_tilde >= torch::minimum(x, xg)) & (m.x_tilde <= torch::maximum(x, xg))).all().item<bool>();

    const bool ok = lo >= 0.5 && hi <= 1.0 && std::abs(mean - reference) <= 0.005 && convex;
    return {ok, "lambda' in [" + fmt(lo, 6) + ", " + fmt(hi, 6) + "], mean " + fmt(mean, 6) + " vs independent " +
                    fmt(reference, 6) + " (tol 0.005), convex " + (convex ? "yes" : "no")};
}

Outcome metric_oracles() {
    const SceneSpec scene(32);
    const auto& spec = scene.factors();
    const int K = spec.size();
    Rng rng(31);
    auto codes = sample_codes(spec, 10000, rng);
    std::vector<std::string> bad;
    std::string detail;

    const double perfect = mig(codes, codes, 20).score;
    const double noise = mig(rng.normal_tensor({10000, K}, torch::kFloat64), codes, 20).score;
    auto dup = mig(torch::cat({codes.select(1, 0).unsqueeze(1), codes}, 1), codes, 20);
    if (std::abs(perfect - 1.0) > 0.05) bad.push_back("MIG perfect");
    if (noise >= 0.05) bad.push_back("MIG independent");
    if (dup.gaps[0] != 0.0) bad.push_back("duplicated gap");
    detail += "MIG " + fmt(perfect) + "/" + fmt(noise) + ", dup gap " + fmt(dup.gaps[0]);

    MetricConfig cfg;
    cfg.n_mig = 10000;
    cfg.n_l2 = 1000;
    auto analytic = analytic_oracle(32);
    GeneratorFn ideal = [&](const torch::Tensor&, const torch::Tensor& c) { return render_batch(c, scene); };
    GeneratorFn ignoring = [&](const torch::Tensor&, const torch::Tensor& c) {
        return render_batch(torch::zeros_like(c), scene);
    };
    Rng ga(32), gb(32);
    const double gen_perfect = mig_gen(ideal, analytic, 8, cfg, ga).score;
    const double gen_ignoring = mig_gen(ignoring, analytic, 8, cfg, gb).score;
    if (std::abs(gen_perfect - 1.0) > 0.05) bad.push_back("MIG-gen perfect");
    if (gen_ignoring >= 0.05) bad.push_back("MIG-gen independent");
    detail += "; MIG-gen " + fmt(gen_perfect) + "/" + fmt(gen_ignoring);

    // Toy channel: the generator writes c into the first pixels and the
    // oracle reads them back with a fixed offset.
    GeneratorFn writer = [K](const torch::Tensor&, const torch::Tensor& c) {
        auto img = torch::zeros({c.size(0), 3, 4, 4}, torch::kFloat64);
        img.view({c.size(0), -1}).slice(1, 0, K).copy_(c);
        return img;
    };
    auto reader = [K](const torch::Tensor& img) { return img.flatten(1).slice(1, 0, K).to(torch::kFloat64); };
    double worst_l2 = 0.0;
    for (double offset : {0.0, 0.1, 0.25}) {
        OracleEncoder shifted("shifted", spec, [&, offset](const torch::Tensor& x) { return reader(x) + offset; },
                              std::vector<double>(K, 0.0));
        Rng r(33);
        worst_l2 = std::max(worst_l2, std::abs(l2_gen(writer, shifted, 0, cfg, r) - offset * std::sqrt(double(K))));
    }
    if (worst_l2 > 1e-9) bad.push_back("L2-gen closed form");
    detail += "; L2-gen dev " + fmt(worst_l2, 2);

    MetricConfig fs_cfg;
    Rng fa(34), fb(35), fnoise(36);
    const double fs_perfect = factor_score([](const torch::Tensor& c) { return c; }, spec, fs_cfg, fa).score;
    const double fs_noise =
        factor_score([&](const torch::Tensor& c) { return fnoise.normal_tensor({c.size(0), K}); }, spec, fs_cfg, fb)
            .score;
    if (fs_perfect != 1.0) bad.push_back("factor score perfect");
    if (std::abs(fs_noise - 1.0 / K) > 0.05) bad.push_back("factor score noise");
    detail += "; factor score " + fmt(fs_perfect) + "/" + fmt(fs_noise) + " (chance " + fmt(1.0 / K) + ")";

    for (const auto& b : bad) detail += "; off: " + b;
    return {bad.empty(), detail};
}

Outcome fine_bottleneck() {
    int checked = 0;
    std::vector<std::string> bad;
    for (int phi : {8, 16, 32}) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            torch::manual_seed(seed);
            auto cfg = NetworkConfig::small_preset(64, 7);
            cfg.f_0 = 16;
            cfg.z_dim = 0;
            cfg.fine_cutoff = phi;
            cfg.fine_factors = {SceneSpec::kObjectHue, SceneSpec::kWallHue, SceneSpec::kBrightness};
            auto g = build_fine_generator(cfg);

            std::vector<int> expected;
            for (int r = 2 * phi; r <= 64; r *= 2) expected.push_back(r);
            if (g->modulated_resolutions() != expected) bad.push_back("modulation below cutoff at phi=" + std::to_string(phi));

            // Dyadic values with a zero-mean checkerboard per block keep the
            // area averages bit-exact.
            auto base = torch::randint(-32, 32, {3, 3, phi, phi}).to(torch::kFloat32) / 64.0;
            auto a = upsample(base, 64 / phi);
            auto row = torch::tensor({1.0f, -1.0f}).repeat({32}).unsqueeze(0);
            auto b = a + row.t().matmul(row) / 64.0;
            if (!torch::equal(downsample(a, phi), downsample(b, phi)) || torch::equal(a, b))
                throw std::logic_error("bottleneck probe construction");
            auto code = torch::rand({3, 3});
            torch::NoGradGuard no_grad;
            if (!torch::equal(fine_generate(g, a, code), fine_generate(g, b, code)))
                bad.push_back("outputs differ at phi=" + std::to_string(phi) + " seed " + std::to_string(seed));
            ++checked;
        }
    }
    std::string detail = std::to_string(checked) + " random fine generators (phi 8/16/32, R=64): outputs " +
                         (bad.empty() ? "bit-identical, modulation only above phi" : "mismatch");
    for (const auto& b : bad) detail += "; " + b;
    return {bad.empty(), detail};
}

Outcome determinism() {
    test::TempDir tmp;
    const auto& ds = test::scene32();
    TrainConfig c;
    c.name = "determinism";
    c.run_root = tmp.path();
    c.network.n_mp = 2;
    c.network.f_mp = 32;
    c.network.f_0 = 16;
    c.network.resolution = 32;
    c.network.z_dim = 16;
    c.network.code_dim = 7;
    c.optim.batch = 8;
    c.seed = 11;
    c.schedule = ProgressiveSchedule::doubling(8, 32, 24);

    auto trajectory = [](Trainer& t, int n) {
        std::vector<nlohmann::json> out;
        for (int i = 0; i < n; ++i) out.push_back(t.step().to_json());
        return out;
    };
    auto params = [](Trainer& t) {
        auto p = t.bundle().generator->parameters();
        for (auto& q : t.bundle().de->parameters()) p.push_back(q);
        return p;
    };

    Trainer a(c, ds), b(c, ds);
    const auto ta = trajectory(a, 8), tb = trajectory(b, 8);
    bool identical = ta == tb;
    auto pa = params(a), pb = params(b);
    for (std::size_t i = 0; i < pa.size(); ++i) identical = identical && torch::equal(pa[i], pb[i]);

    const auto ckpt = tmp.path() / "mid.ckpt";
    a.save(ckpt);
    const auto next_a = a.step();
    auto resumed = Trainer::resume(c, ds, ckpt);
    const auto next_r = resumed->step();
    double dev = std::max(std::abs(next_a.loss_g - next_r.loss_g), std::abs(next_a.loss_de - next_r.loss_de));
    auto pr = params(*resumed);
    pa = params(a);
    for (std::size_t i = 0; i < pa.size(); ++i) dev = std::max(dev, (pa[i] - pr[i]).abs().max().item<double>());

    const bool ok = identical && dev <= 1e-5 && next_a.images_seen == next_r.images_seen;
    return {ok, std::string("8-step trajectories ") + (identical ? "identical" : "differ") +
                    "; resume vs uninterrupted at next step max deviation " + fmt(dev, 3) + " (tol 1e-5)"};
}

// --- training criteria --------------------------------------------------------

struct TrainingPlan {
    fs::path work;
    std::int64_t total_images = 0;
    std::int64_t phase_images = 0;
    int oracle_epochs = 30;
};

const Dataset& dataset64(const fs::path& work) {
    static std::optional<Dataset> ds;
    if (!ds) {
        const auto dir = work / "shapes2d_mini_64";
        if (!fs::exists(dir / "manifest.json")) {
            std::cerr << "generating dataset in " << dir << "\n";
            generate_dataset(SceneSpec(64), dir, 0);
        }
        ds = Dataset::load(dir);
        ds->preload();
    }
    return *ds;
}

OracleTrainConfig oracle_config(const TrainingPlan& plan) {
    OracleTrainConfig c;
    c.working_resolution = 32;
    c.epochs = plan.oracle_epochs;
    c.seed = 1;
    c.verbose = true;
    return c;
}

fs::path oracle_path(const TrainingPlan& plan) {
    return plan.work / ("oracle_w32_e" + std::to_string(plan.oracle_epochs) + ".pt");
}

LearnedOracle cached_oracle(const TrainingPlan& plan) {
    const auto path = oracle_path(plan);
    if (fs::exists(path)) return LearnedOracle::load(path);
    auto o = train_oracle_encoder(dataset64(plan.work), oracle_config(plan));
    o.save(path);
    return o;
}

Outcome renderer_round_trip(const TrainingPlan& plan) {
    const SceneSpec scene(64);
    const auto& spec = scene.factors();
    const auto n = spec.grid_size();
    double worst = 0.0;
    for (std::int64_t start = 0; start < n; start += 1024) {
        const auto end = std::min(n, start + 1024);
        auto codes = torch::empty({end - start, spec.size()}, torch::kFloat64);
        for (auto i = start; i < end; ++i) codes[i - start] = grid_code(spec, i).to_tensor(torch::kFloat64);
        auto est = analytic_encode_batch(render_batch(codes, scene), scene);
        worst = std::max(worst, (est - codes).abs().max().item<double>());
    }
    auto oracle = cached_oracle(plan);
    double rms = 0.0;
    std::string per_dim;
    for (double r : oracle.heldout_rms) {
        rms = std::max(rms, r);
        per_dim += (per_dim.empty() ? "" : " ") + fmt(r, 3);
    }
    const bool ok = worst <= 1e-3 && rms <= 0.05;
    return {ok, "analytic round trip max error " + fmt(worst, 3) + " over " + std::to_string(n) +
                    " grid codes (tol 1e-3); learned oracle held-out RMS max " + fmt(rms, 4) + " [" + per_dim +
                    "] (tol 0.05)"};
}

TrainConfig base_run(const TrainingPlan& plan, const std::string& name, double eta) {
    TrainConfig c;
    c.name = name;
    c.dataset_dir = plan.work / "shapes2d_mini_64";
    c.run_root = plan.work / "runs";
    c.eta = eta;
    c.network = NetworkConfig::small_preset(64, 7);
    c.network.f_0 = 32;
    c.network.z_dim = 8;
    c.total_images = plan.total_images;
    c.schedule = ProgressiveSchedule::doubling(8, 64, plan.phase_images);
    c.seed = 0;
    c.oracle_path = oracle_path(plan);
    return c;
}

MetricReport cached_run(const TrainingPlan& plan, const TrainConfig& config) {
    const auto dir = config.run_dir();
    const auto report = dir / "reports" / "final.json";
    if (fs::exists(report) && fs::exists(dir / "config.json")) {
        std::ifstream cf(dir / "config.json");
        const auto stored = nlohmann::json::parse(cf);
        if (stored.value("config_digest", std::string()) == config.digest()) {
            std::ifstream rf(report);
            return MetricReport::from_json(nlohmann::json::parse(rf));
        }
    }
    cached_oracle(plan);
    std::cerr << "training " << config.name << " (" << config.total_images << " images)\n";
    return train(config, dataset64(plan.work)).final_report();
}

struct GenScores {
    double mig_gen = 0.0, l2_gen = 0.0;
};

GenScores scores(const MetricReport& r) { return {r.mig_gen.value_or(NAN), r.l2_gen.value_or(NAN)}; }

Outcome supervision_trend(const TrainingPlan& plan) {
    auto info = base_run(plan, "info", 0.0);
    info.mode = TrainMode::kInfo;
    const auto s0 = scores(cached_run(plan, info));
    const auto s1 = scores(cached_run(plan, base_run(plan, "semi_eta0.01", 0.01)));
    const auto sf = scores(cached_run(plan, base_run(plan, "semi_eta1", 1.0)));
    const bool mig_up = s1.mig_gen >= s0.mig_gen + 0.15;
    const bool l2_down = s1.l2_gen <= s0.l2_gen - 0.15;
    const bool near_full = std::abs(s1.mig_gen - sf.mig_gen) <= 0.15;
    std::string detail = "MIG-gen eta 0/0.01/1 = " + fmt(s0.mig_gen) + "/" + fmt(s1.mig_gen) + "/" + fmt(sf.mig_gen) +
                         ", L2-gen eta 0/0.01 = " + fmt(s0.l2_gen) + "/" + fmt(s1.l2_gen) + "; gain " +
                         fmt(s1.mig_gen - s0.mig_gen) + " (need >= 0.15), L2 drop " + fmt(s0.l2_gen - s1.l2_gen) +
                         " (need >= 0.15), gap to full " + fmt(std::abs(s1.mig_gen - sf.mig_gen)) + " (need <= 0.15)";
    return {mig_up && l2_down && near_full, detail};
}

Outcome ablation_direction(const TrainingPlan& plan) {
    const auto full = scores(cached_run(plan, base_run(plan, "semi_eta0.01", 0.01)));
    auto no_sr_cfg = base_run(plan, "semi_eta0.01_alpha0", 0.01);
    no_sr_cfg.weights.alpha = 0.0;
    auto no_unsup_cfg = base_run(plan, "semi_eta0.01_gammaG0", 0.01);
    no_unsup_cfg.weights.gamma_g = 0.0;
    const auto no_sr = scores(cached_run(plan, no_sr_cfg));
    const auto no_unsup = scores(cached_run(plan, no_unsup_cfg));
    const bool ok = no_sr.mig_gen <= full.mig_gen && no_unsup.mig_gen < 0.2;
    return {ok, "MIG-gen full " + fmt(full.mig_gen) + ", alpha=0 " + fmt(no_sr.mig_gen) + " (must not exceed full), " +
                    "gamma_G=0 " + fmt(no_unsup.mig_gen) + " (need < 0.2)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance gate"};
    std::string suite = "fast";
    std::string only;
    TrainingPlan plan;
    std::string work = "acceptance_work";
    plan.total_images = 200000;
    plan.phase_images = 20000;
    app.add_option("--suite", suite)->check(CLI::IsMember({"fast", "training", "all"}));
    app.add_option("--only", only, "run a single criterion");
    app.add_option("--work", work, "cache directory for the training suite");
    app.add_option("--images", plan.total_images, "images per training run");
    app.add_option("--phase-images", plan.phase_images, "images per progressive phase");
    app.add_option("--oracle-epochs", plan.oracle_epochs);
    CLI11_PARSE(app, argc, argv);
    plan.work = fs::absolute(work);
    fs::create_directories(plan.work);

    Gate gate(only);
    if (suite != "training") {
        gate.run("loss_reduction_identities", loss_reduction_identities);
        gate.run("gradient_checks", gradient_checks);
        gate.run("mixup_properties", mixup_properties);
        gate.run("metric_oracles", metric_oracles);
        gate.run("fine_bottleneck", fine_bottleneck);
        gate.run("determinism", determinism);
    }
    if (suite != "fast") {
        gate.run("renderer_oracle_round_trip", [&] { return renderer_round_trip(plan); });
        gate.run("supervision_trend", [&] { return supervision_trend(plan); });
        gate.run("ablation_direction", [&] { return ablation_direction(plan); });
    }
    return gate.failures() == 0 ? 0 : 1;
}
