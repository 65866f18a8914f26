#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <torch/torch.h>

namespace disent {

// Seeded generator used for every sampling decision in the library.
//
// std::mt19937_64 has a fully specified output sequence, but the standard
// distributions do not. Integer and unit-interval draws are therefore derived
// from raw engine output here so that anything built only on them (dataset
// splits, code sampling, batch order) is bit-identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    // Standard normal via Box-Muller on uniform01().
    double normal();

    // Beta(a, b) through two gamma draws; uses std::gamma_distribution and is
    // therefore reproducible per standard library, not across them.
    double beta(double a, double b);

    // N(0,1) tensor of the given shape filled from this generator.
    torch::Tensor normal_tensor(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);

    // Derives an independent child seed (SplitMix64 of the next engine value).
    std::uint64_t fork_seed();

    std::string state() const;
    void set_state(const std::string& state);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace disent
