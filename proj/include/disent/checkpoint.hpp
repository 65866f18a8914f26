#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/factor_model.hpp"
#include "disent/networks.hpp"

namespace disent {

// Generator plus shared discriminator/encoder with everything needed to
// resume or serve them.
struct ModelBundle {
    NetworkConfig config;
    FactorSpec spec;
    Generator generator{nullptr};
    DiscriminatorEncoder de{nullptr};
    std::int64_t step = 0;
    std::int64_t images_seen = 0;
    std::string rng_state;
    nlohmann::json extra = nlohmann::json::object();

    // Fresh networks; parameter init is driven by `seed` only.
    static ModelBundle create(const NetworkConfig& config, const FactorSpec& spec, std::uint64_t seed);

    // Regular generator on full-resolution output, no gradient tracking.
    torch::Tensor generate(const torch::Tensor& z, const torch::Tensor& code);
};

struct OptimizerPair {
    std::shared_ptr<torch::optim::Adam> generator;
    std::shared_ptr<torch::optim::Adam> de;
};

// Single-file archive: metadata JSON (network config, factor spec, step, RNG
// state, extra), parameter tensors of both networks, and optionally the
// optimizer states.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                     const OptimizerPair* optimizers = nullptr);

// Throws CheckpointError when the file is unreadable, or when `expected_spec`
// is given and differs from the stored factor spec.
ModelBundle load_checkpoint(const std::filesystem::path& path, const FactorSpec* expected_spec = nullptr);

// Restores optimizer state saved alongside the parameters. Returns false if
// the checkpoint has none.
bool load_optimizer_state(const std::filesystem::path& path, OptimizerPair& optimizers);

std::string checkpoint_digest(const std::filesystem::path& path);

}  // namespace disent
