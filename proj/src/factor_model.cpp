#include "disent/factor_model.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <set>

#include "disent/error.hpp"

namespace disent {

FactorSpec::FactorSpec(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw InvalidArgument("FactorSpec: at least one factor is required");
    std::set<std::string> seen;
    for (const auto& f : factors_) {
        if (f.cardinality < 2)
            throw InvalidArgument("FactorSpec: factor '" + f.name + "' needs cardinality >= 2");
        if (!seen.insert(f.name).second)
            throw InvalidArgument("FactorSpec: duplicate factor name '" + f.name + "'");
    }
}

double FactorSpec::grid_value(int k, int level) const {
    const int m = (*this)[k].cardinality;
    if (level < 0 || level >= m) throw InvalidArgument("grid_value: level out of range");
    return static_cast<double>(level) / static_cast<double>(m - 1);
}

std::vector<double> FactorSpec::grid(int k) const {
    std::vector<double> out;
    for (int i = 0; i < (*this)[k].cardinality; ++i) out.push_back(grid_value(k, i));
    return out;
}

bool FactorSpec::on_grid(int k, double v) const {
    const int m = (*this)[k].cardinality;
    const double scaled = v * (m - 1);
    const double nearest = std::round(scaled);
    return nearest >= 0 && nearest <= m - 1 && std::abs(scaled - nearest) <= 1e-6 * (m - 1);
}

int FactorSpec::level_of(int k, double v) const {
    if (!on_grid(k, v))
        throw InvalidArgument("value " + std::to_string(v) + " is not on the grid of factor '" +
                              (*this)[k].name + "'");
    return static_cast<int>(std::lround(v * ((*this)[k].cardinality - 1)));
}

std::int64_t FactorSpec::grid_size() const {
    std::int64_t n = 1;
    for (const auto& f : factors_) n *= f.cardinality;
    return n;
}

int FactorSpec::index_of(const std::string& name) const {
    for (int k = 0; k < size(); ++k)
        if (factors_[static_cast<std::size_t>(k)].name == name) return k;
    throw InvalidArgument("unknown factor '" + name + "'");
}

std::vector<std::string> FactorSpec::names() const {
    std::vector<std::string> out;
    for (const auto& f : factors_) out.push_back(f.name);
    return out;
}

nlohmann::json FactorSpec::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : factors_) arr.push_back({{"name", f.name}, {"cardinality", f.cardinality}});
    return {{"factors", arr}};
}

FactorSpec FactorSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("factors") || !j["factors"].is_array())
        throw InvalidArgument("factor spec JSON must be an object with a 'factors' array");
    std::vector<Factor> factors;
    for (const auto& f : j["factors"]) {
        if (!f.contains("name") || !f.contains("cardinality"))
            throw InvalidArgument("factor entry needs 'name' and 'cardinality'");
        factors.push_back({f["name"].get<std::string>(), f["cardinality"].get<int>()});
    }
    return FactorSpec(std::move(factors));
}

FactorCode::FactorCode(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("factor code entries must lie in [0,1]");
}

void FactorCode::check(const FactorSpec& spec) const {
    if (size() != spec.size())
        throw InvalidArgument("factor code has length " + std::to_string(size()) + ", expected " +
                              std::to_string(spec.size()));
}

torch::Tensor FactorCode::to_tensor(torch::Dtype dtype) const {
    return torch::tensor(values_, torch::kFloat64).to(dtype);
}

FactorCode FactorCode::from_tensor(const torch::Tensor& t) {
    auto flat = t.detach().to(torch::kFloat64).contiguous().view({-1});
    std::vector<double> v(flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel());
    return FactorCode(std::move(v));
}

std::vector<std::int64_t> DatasetSplit::labeled_indices() const {
    std::vector<std::int64_t> out;
    out.reserve(labeled.size());
    for (const auto& p : labeled) out.push_back(p.index);
    return out;
}

torch::Tensor LatentPrior::sample(std::int64_t n, Rng& rng) const {
    if (dim < 1) throw InvalidArgument("latent dimension must be >= 1");
    return rng.normal_tensor({n, dim});
}

FactorCode sample_code(const FactorSpec& spec, Rng& rng) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(spec.size()));
    for (int k = 0; k < spec.size(); ++k) {
        const auto m = static_cast<std::uint64_t>(spec[k].cardinality);
        v.push_back(spec.grid_value(k, static_cast<int>(rng.uniform_int(m))));
    }
    return FactorCode(std::move(v));
}

torch::Tensor sample_codes(const FactorSpec& spec, std::int64_t n, Rng& rng) {
    auto out = torch::empty({n, spec.size()}, torch::kFloat64);
    auto a = out.accessor<double, 2>();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto c = sample_code(spec, rng);
        for (int k = 0; k < spec.size(); ++k) a[i][k] = c[k];
    }
    return out;
}

std::int64_t labeled_count(std::int64_t num_images, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0,1]");
    if (num_images < 0) throw InvalidArgument("num_images must be nonnegative");
    // nearbyint honours the current rounding mode; force ties-to-even.
    const int old_mode = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const double r = std::nearbyint(eta * static_cast<double>(num_images));
    std::fesetround(old_mode);
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(r), 0, num_images);
}

DatasetSplit split_labeled(std::int64_t num_images, double eta, std::uint64_t seed) {
    const std::int64_t n_labeled = labeled_count(num_images, eta);

    std::vector<std::int64_t> perm(static_cast<std::size_t>(num_images));
    std::iota(perm.begin(), perm.end(), 0);
    // Partial Fisher-Yates: the first n_labeled slots are a uniform sample
    // without replacement, and a larger eta extends the same prefix.
    Rng rng(seed);
    for (std::int64_t i = 0; i < n_labeled; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(num_images - i)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    DatasetSplit split;
    split.eta = eta;
    split.seed = seed;
    split.total = num_images;
    std::vector<std::int64_t> chosen(perm.begin(), perm.begin() + n_labeled);
    std::sort(chosen.begin(), chosen.end());
    for (auto idx : chosen) split.labeled.push_back({idx, FactorCode{}});
    split.unlabeled.assign(perm.begin() + n_labeled, perm.end());
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
    return split;
}

void attach_labels(DatasetSplit& split, const torch::Tensor& codes) {
    if (codes.dim() != 2 || codes.size(0) != split.total)
        throw InvalidArgument("attach_labels: code matrix must have one row per dataset image");
    auto c = codes.to(torch::kFloat64).contiguous();
    for (auto& pair : split.labeled) pair.code = FactorCode::from_tensor(c[pair.index]);
}

torch::Tensor discretize_codes(const torch::Tensor& codes, int bins) {
    if (bins < 2) throw InvalidArgument("discretize_codes: bins must be >= 2");
    auto c = codes.to(torch::kFloat64);
    if (c.numel() > 0) {
        const double lo = c.min().item<double>();
        const double hi = c.max().item<double>();
        if (!(lo >= 0.0 && hi <= 1.0)) throw InvalidArgument("discretize_codes: entries must lie in [0,1]");
    }
    return torch::clamp_max(torch::floor(c * bins), bins - 1).to(torch::kInt64);
}

std::int64_t grid_index(const FactorSpec& spec, const FactorCode& code) {
    code.check(spec);
    std::int64_t idx = 0;
    for (int k = 0; k < spec.size(); ++k) idx = idx * spec[k].cardinality + spec.level_of(k, code[k]);
    return idx;
}

FactorCode grid_code(const FactorSpec& spec, std::int64_t index) {
    if (index < 0 || index >= spec.grid_size()) throw InvalidArgument("grid_code: index out of range");
    std::vector<double> v(static_cast<std::size_t>(spec.size()));
    for (int k = spec.size() - 1; k >= 0; --k) {
        const int m = spec[k].cardinality;
        v[static_cast<std::size_t>(k)] = spec.grid_value(k, static_cast<int>(index % m));
        index /= m;
    }
    return FactorCode(std::move(v));
}

}  // namespace disent
