#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/checkpoint.hpp"
#include "disent/factor_model.hpp"
#include "disent/losses.hpp"
#include "disent/metrics.hpp"
#include "disent/networks.hpp"
#include "disent/rng.hpp"
#include "disent/synth_data.hpp"

namespace disent {

enum class TrainMode { kSemi, kInfo, kFine, kEncoderOnly, kEncoderOnlyMixup };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct ProgressivePhase {
    int resolution = 8;
    std::int64_t start = 0;  // images_seen at which this resolution becomes active

    bool operator==(const ProgressivePhase&) const = default;
};

// Ascending resolutions, each entering with a linear fade-in of `fade_in`
// images. An empty schedule trains at full resolution throughout.
struct ProgressiveSchedule {
    std::vector<ProgressivePhase> phases;
    std::int64_t fade_in = 0;

    bool enabled() const { return !phases.empty(); }
    void validate(int final_resolution) const;
    nlohmann::json to_json() const;
    static ProgressiveSchedule from_json(const nlohmann::json& j);
    // Phases from `start_res` up to `final_res`, each lasting `per_phase`
    // images, with the first half of every later phase spent fading in.
    static ProgressiveSchedule doubling(int start_res, int final_res, std::int64_t per_phase);
};

struct PhaseState {
    int resolution = 0;
    double fade = 1.0;  // weight of the newest block
};

PhaseState progressive_phase(const ProgressiveSchedule& schedule, std::int64_t images_seen);

struct OptimizerSettings {
    double lr_g = 1e-3;
    double lr_de = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    int batch = 16;
};

struct TrainConfig {
    std::string name = "run";
    std::filesystem::path dataset_dir;
    double eta = 0.01;
    LossWeights weights;
    NetworkConfig network;
    OptimizerSettings optim;
    ProgressiveSchedule schedule;
    std::int64_t total_images = 100000;
    std::int64_t eval_every = 0;        // images; 0 evaluates at the end only
    std::int64_t checkpoint_every = 0;  // images; 0 checkpoints at the end only
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::kSemi;
    MetricConfig metrics;
    std::uint64_t eval_seed = 1000003;
    bool eval_factor_score = false;
    std::filesystem::path oracle_path;  // learned oracle; empty selects the analytic one
    std::filesystem::path run_root;     // empty: $DISENT_RUN_DIR, else "run"

    void validate() const;
    // The configuration actually trained: mode=info forces eta = 0,
    // beta = alpha = 0 and gamma_E = gamma_G.
    TrainConfig effective() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::string digest() const;
    std::filesystem::path run_dir() const;
};

struct StepStats {
    std::int64_t step = 0;
    std::int64_t images_seen = 0;
    int resolution = 0;
    double fade = 1.0;
    double loss_g = 0.0, loss_de = 0.0;
    double gan_g = 0.0, gan_de = 0.0, r1 = 0.0;
    double unsup_g = 0.0, unsup_de = 0.0, sup = 0.0, sr_g = 0.0, sr_de = 0.0;

    nlohmann::json to_json() const;
};

struct RunRecord {
    std::string name;
    std::filesystem::path dir;
    std::string config_digest;
    std::vector<StepStats> losses;
    std::vector<std::pair<std::int64_t, MetricReport>> reports;  // (step, report)
    std::vector<std::filesystem::path> checkpoints;

    const MetricReport& final_report() const;
    nlohmann::json to_json() const;
};

// One logical trainer: owns the networks, optimizers, split and sampling
// state. Ground-truth codes reach the losses only through split().labeled.
class Trainer {
public:
    Trainer(const TrainConfig& config, const Dataset& dataset);

    // Continues from a checkpoint written by save(); parameters, optimizer
    // moments, counters and the sampling stream are all restored.
    static std::unique_ptr<Trainer> resume(const TrainConfig& config, const Dataset& dataset,
                                           const std::filesystem::path& checkpoint);

    // One (D,E) update followed by one G update (encoder-only modes: a
    // single encoder update). Throws DivergenceError on a non-finite loss.
    StepStats step();

    // Steps until total_images, evaluating and checkpointing at the
    // configured cadence.
    RunRecord run();

    void save(const std::filesystem::path& path);

    ModelBundle& bundle() { return bundle_; }
    const TrainConfig& config() const { return config_; }
    const DatasetSplit& split() const { return split_; }
    std::int64_t images_seen() const { return bundle_.images_seen; }
    Rng& rng() { return rng_; }

private:
    StepStats gan_step();
    StepStats encoder_step();
    torch::Tensor real_batch(int resolution);
    std::vector<std::int64_t> labeled_draw(std::int64_t count);
    torch::Tensor labeled_images(const std::vector<std::int64_t>& rows, int resolution);
    torch::Tensor labeled_codes(const std::vector<std::int64_t>& rows);

    TrainConfig config_;
    const Dataset& dataset_;
    DatasetSplit split_;
    torch::Tensor labeled_code_table_;  // |L| x K' float32, only labeled rows
    std::vector<std::int64_t> real_pool_;
    ModelBundle bundle_;
    OptimizerPair optimizers_;
    Rng rng_;
};

struct EvalOptions {
    MetricConfig metrics;
    std::uint64_t seed = 1000003;
    bool generator_metrics = true;
    bool factor_score = true;
};

// Encoder metrics on real images (MIG, L2, optionally Factor score) and, for
// generators, MIG-gen/L2-gen through the oracle. Fine models are scored on
// their fine factors only.
MetricReport evaluate(ModelBundle& bundle, const Dataset& dataset, const OracleEncoder* oracle,
                      const EvalOptions& options);
MetricReport evaluate(const std::filesystem::path& checkpoint, const Dataset& dataset, const OracleEncoder* oracle,
                      const EvalOptions& options);

// Loads the learned oracle at `path`, or builds the analytic one when empty.
OracleEncoder load_oracle(const std::filesystem::path& path, int resolution);

RunRecord train(const TrainConfig& config);
RunRecord train(const TrainConfig& config, const Dataset& dataset);
// Encoder-only baselines; eta must be positive.
RunRecord train_encoder_baseline(const TrainConfig& config, const Dataset& dataset);

// One run per eta, named <name>_eta<eta>.
std::vector<RunRecord> sweep_eta(const TrainConfig& base, const std::vector<double>& etas);

}  // namespace disent
