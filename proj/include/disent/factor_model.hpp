#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/rng.hpp"

namespace disent {

struct Factor {
    std::string name;
    int cardinality = 2;

    bool operator==(const Factor&) const = default;
};

// Ordered factor-of-variation schema. Factor k takes the values
// {i / (m_k - 1) : i = 0..m_k-1}.
class FactorSpec {
public:
    FactorSpec() = default;
    explicit FactorSpec(std::vector<Factor> factors);

    int size() const { return static_cast<int>(factors_.size()); }
    const std::vector<Factor>& factors() const { return factors_; }
    const Factor& operator[](int k) const { return factors_.at(static_cast<std::size_t>(k)); }

    // Grid value of level `level` for factor k.
    double grid_value(int k, int level) const;
    std::vector<double> grid(int k) const;

    // Level index of v on factor k's grid; throws if v is not on the grid
    // (tolerance 1e-6, so float32 copies of grid values still resolve).
    int level_of(int k, double v) const;
    bool on_grid(int k, double v) const;

    // Product of cardinalities.
    std::int64_t grid_size() const;
    int index_of(const std::string& name) const;

    std::vector<std::string> names() const;

    nlohmann::json to_json() const;
    static FactorSpec from_json(const nlohmann::json& j);

    bool operator==(const FactorSpec&) const = default;

private:
    std::vector<Factor> factors_;
};

// A point c in [0,1]^K.
class FactorCode {
public:
    FactorCode() = default;
    explicit FactorCode(std::vector<double> values);

    int size() const { return static_cast<int>(values_.size()); }
    double operator[](int k) const { return values_.at(static_cast<std::size_t>(k)); }
    const std::vector<double>& values() const { return values_; }

    // Throws unless the length matches spec.size().
    void check(const FactorSpec& spec) const;

    torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;
    static FactorCode from_tensor(const torch::Tensor& t);

    bool operator==(const FactorCode&) const = default;

private:
    std::vector<double> values_;
};

struct LabeledPair {
    std::int64_t index = 0;
    FactorCode code;
};

// Partition of the dataset indices into a labeled part (with codes) and an
// unlabeled part (indices only).
struct DatasetSplit {
    std::vector<LabeledPair> labeled;
    std::vector<std::int64_t> unlabeled;
    double eta = 0.0;
    std::uint64_t seed = 0;
    std::int64_t total = 0;

    std::vector<std::int64_t> labeled_indices() const;
};

struct LatentPrior {
    int dim = 128;

    torch::Tensor sample(std::int64_t n, Rng& rng) const;
};

// Uniform draw from each factor's grid.
FactorCode sample_code(const FactorSpec& spec, Rng& rng);
// N x K tensor (float64) of independent sample_code draws.
torch::Tensor sample_codes(const FactorSpec& spec, std::int64_t n, Rng& rng);

// round-half-even(eta * num_images).
std::int64_t labeled_count(std::int64_t num_images, double eta);

// Chooses exactly labeled_count(num_images, eta) indices uniformly without
// replacement. The returned split has no codes attached yet.
DatasetSplit split_labeled(std::int64_t num_images, double eta, std::uint64_t seed);

// Copies the ground-truth codes of the labeled indices (and only those) into
// the split. `codes` is N x K.
void attach_labels(DatasetSplit& split, const torch::Tensor& codes);

// Bins each entry v in [0,1] to min(floor(v * bins), bins - 1).
torch::Tensor discretize_codes(const torch::Tensor& codes, int bins);

// Mixed-radix row index of a grid code (first factor most significant).
std::int64_t grid_index(const FactorSpec& spec, const FactorCode& code);
FactorCode grid_code(const FactorSpec& spec, std::int64_t index);

}  // namespace disent
