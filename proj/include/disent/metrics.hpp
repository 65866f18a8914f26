#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/factor_model.hpp"
#include "disent/networks.hpp"
#include "disent/rng.hpp"

namespace disent {

struct MetricConfig {
    std::int64_t n_mig = 10000;
    std::int64_t n_l2 = 1000;
    std::int64_t factor_score_train = 5000;
    std::int64_t factor_score_test = 2000;
    std::int64_t factor_score_vote_batch = 64;
    std::int64_t factor_score_variance_samples = 10000;
    int bins = 20;
    std::int64_t batch = 256;

    void validate() const;
    nlohmann::json to_json() const;
    static MetricConfig from_json(const nlohmann::json& j);
};

// images (N x 3 x R x R) -> code predictions (N x K').
using EncoderFn = std::function<torch::Tensor(const torch::Tensor&)>;
// (z, codes) -> images. Codes arrive as float64; networks cast them down.
using GeneratorFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;
// ground-truth codes (N x K) -> encoder outputs on matching observations (N x D).
using RepresentationFn = std::function<torch::Tensor(const torch::Tensor&)>;

struct MutualInfo {
    torch::Tensor mi;       // K' x K, nats (float64)
    torch::Tensor entropy;  // K, nats
    std::vector<bool> degenerate_pred;    // single occupied bin
    std::vector<bool> degenerate_factor;  // single occupied bin
};

// Plug-in histogram estimates. Codes are binned with discretize_codes;
// predictions are first min-max scaled per column onto [0,1].
MutualInfo mutual_info_matrix(const torch::Tensor& preds, const torch::Tensor& codes, int bins);

struct MigResult {
    double score = 0.0;
    std::vector<double> gaps;  // per factor, normalised; 0 for degenerate factors
    std::vector<int> top;      // argmax prediction dim per factor
    MutualInfo info;
};

// Mean over factors of (I(top; c_k) - I(second; c_k)) / H(c_k).
MigResult mig(const torch::Tensor& preds, const torch::Tensor& codes, int bins);

// Mean per-sample Euclidean distance.
double l2_score(const torch::Tensor& preds, const torch::Tensor& codes);

// Runs `encoder` over `images` in chunks of `batch` without gradient tracking.
torch::Tensor predict_batched(const EncoderFn& encoder, const torch::Tensor& images, std::int64_t batch);

// An encoder trusted to read factor codes off images. Metric duty is refused
// when the recorded held-out per-dimension RMS exceeds the gate.
class OracleEncoder {
public:
    static constexpr double kDefaultGate = 0.05;

    OracleEncoder(std::string name, FactorSpec spec, EncoderFn predict, std::vector<double> heldout_rms,
                  double gate = kDefaultGate);

    const std::string& name() const { return name_; }
    const FactorSpec& spec() const { return spec_; }
    const std::vector<double>& heldout_rms() const { return heldout_rms_; }
    double max_rms() const;
    double gate() const { return gate_; }
    bool passes_gate() const { return max_rms() <= gate_; }
    // Throws OracleQualityError when the gate is not met.
    void require_gate() const;

    // Gate-checked prediction.
    torch::Tensor predict(const torch::Tensor& images) const;

    std::vector<double> loss_record;

private:
    std::string name_;
    FactorSpec spec_;
    EncoderFn predict_;
    std::vector<double> heldout_rms_;
    double gate_;
};

// Samples N (z, c') pairs with c' uniform on the grid, scores the oracle's
// reading of G(z, c') with the MIG formula over the whole batch.
MigResult mig_gen(const GeneratorFn& generator, const OracleEncoder& oracle, int z_dim, const MetricConfig& config,
                  Rng& rng);

// (1/N) sum ||E_oracle(G(z, c')) - c'|| with N = n_l2.
double l2_gen(const GeneratorFn& generator, const OracleEncoder& oracle, int z_dim, const MetricConfig& config,
              Rng& rng);

struct FactorScoreResult {
    double score = 0.0;
    std::vector<int> excluded_dims;  // zero empirical variance
    std::vector<int> classifier;     // majority factor per representation dim (-1 if unseen)
};

FactorScoreResult factor_score(const RepresentationFn& represent, const FactorSpec& spec, const MetricConfig& config,
                               Rng& rng);

struct MetricReport {
    std::optional<double> mig, l2, mig_gen, l2_gen, factor_score;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::vector<double>> mi_matrix;

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

std::vector<std::vector<double>> to_rows(const torch::Tensor& matrix);

// --- oracle encoder training ------------------------------------------------

class Dataset;

struct OracleTrainConfig {
    int f_0 = 32;
    // Side length the network works at; images are area-downsampled to it.
    // 0 keeps the dataset resolution.
    int working_resolution = 0;
    int epochs = 30;
    int batch = 32;
    double lr = 2e-3;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1234;
    double gate = OracleEncoder::kDefaultGate;
    bool verbose = false;

    nlohmann::json to_json() const;
    static OracleTrainConfig from_json(const nlohmann::json& j);
};

// Learned oracle: the network plus its reading of code predictions.
struct LearnedOracle {
    NetworkConfig network;
    int image_resolution = 0;  // side length of the images it reads
    FactorSpec spec;
    DiscriminatorEncoder net{nullptr};
    std::vector<double> heldout_rms;
    std::vector<double> loss_record;
    double gate = OracleEncoder::kDefaultGate;

    OracleEncoder encoder() const;
    void save(const std::filesystem::path& path) const;
    static LearnedOracle load(const std::filesystem::path& path);
};

// Fits an encoder to every ground-truth pair except a held-out slice, on
// which the per-dimension RMS error is recorded.
LearnedOracle train_oracle_encoder(const Dataset& dataset, const OracleTrainConfig& config);

// render_scene / analytic_encode pair packaged as an oracle; its RMS is
// measured on `probe` random grid renders.
OracleEncoder analytic_oracle(int resolution, std::int64_t probe = 200, std::uint64_t seed = 99);

}  // namespace disent
