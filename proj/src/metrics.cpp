#include "disent/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "disent/error.hpp"

namespace disent {

void MetricConfig::validate() const {
    if (n_mig <= 0 || n_l2 <= 0 || factor_score_train <= 0 || factor_score_test <= 0 ||
        factor_score_vote_batch <= 1 || factor_score_variance_samples <= 1 || batch <= 0)
        throw InvalidArgument("metric sample counts must be positive");
    if (bins < 2) throw InvalidArgument("bins must be at least 2");
}

nlohmann::json MetricConfig::to_json() const {
    return {{"n_mig", n_mig},
            {"n_l2", n_l2},
            {"factor_score_train", factor_score_train},
            {"factor_score_test", factor_score_test},
            {"factor_score_vote_batch", factor_score_vote_batch},
            {"factor_score_variance_samples", factor_score_variance_samples},
            {"bins", bins},
            {"batch", batch}};
}

MetricConfig MetricConfig::from_json(const nlohmann::json& j) {
    MetricConfig c;
    c.n_mig = j.value("n_mig", c.n_mig);
    c.n_l2 = j.value("n_l2", c.n_l2);
    c.factor_score_train = j.value("factor_score_train", c.factor_score_train);
    c.factor_score_test = j.value("factor_score_test", c.factor_score_test);
    c.factor_score_vote_batch = j.value("factor_score_vote_batch", c.factor_score_vote_batch);
    c.factor_score_variance_samples = j.value("factor_score_variance_samples", c.factor_score_variance_samples);
    c.bins = j.value("bins", c.bins);
    c.batch = j.value("batch", c.batch);
    c.validate();
    return c;
}

namespace {

std::vector<std::int64_t> bin_column(const torch::Tensor& column_bins) {
    auto c = column_bins.to(torch::kInt64).contiguous();
    const auto* p = c.data_ptr<std::int64_t>();
    return std::vector<std::int64_t>(p, p + c.numel());
}

double entropy_of(const std::vector<std::int64_t>& bins, int nbins, bool* degenerate) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(nbins), 0);
    for (auto b : bins) ++counts[static_cast<std::size_t>(b)];
    const double n = static_cast<double>(bins.size());
    double h = 0.0;
    int occupied = 0;
    for (auto c : counts) {
        if (c == 0) continue;
        ++occupied;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    if (degenerate) *degenerate = occupied <= 1;
    return occupied <= 1 ? 0.0 : h;
}

double plugin_mi(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, int nbins) {
    const std::size_t nb = static_cast<std::size_t>(nbins);
    std::vector<std::int64_t> joint(nb * nb, 0), ma(nb, 0), mb(nb, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[static_cast<std::size_t>(a[i]) * nb + static_cast<std::size_t>(b[i])];
        ++ma[static_cast<std::size_t>(a[i])];
        ++mb[static_cast<std::size_t>(b[i])];
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (std::size_t x = 0; x < nb; ++x) {
        if (ma[x] == 0) continue;
        for (std::size_t y = 0; y < nb; ++y) {
            const auto c = joint[x * nb + y];
            if (c == 0) continue;
            mi += static_cast<double>(c) / n *
                  std::log(static_cast<double>(c) * n / (static_cast<double>(ma[x]) * static_cast<double>(mb[y])));
        }
    }
    return std::max(mi, 0.0);
}

}  // namespace

MutualInfo mutual_info_matrix(const torch::Tensor& preds, const torch::Tensor& codes, int bins) {
    if (bins < 2) throw InvalidArgument("bins must be at least 2");
    if (preds.dim() != 2 || codes.dim() != 2 || preds.size(0) != codes.size(0))
        throw InvalidArgument("preds and codes must be N x K' and N x K with equal N");
    if (codes.size(0) == 0) throw InvalidArgument("mutual information needs at least one sample");
    auto c = codes.to(torch::kFloat64);
    if (c.min().item<double>() < 0.0 || c.max().item<double>() > 1.0)
        throw InvalidArgument("codes must lie in [0,1]");

    auto p = preds.detach().to(torch::kFloat64);
    if (!torch::isfinite(p).all().item<bool>()) throw InvalidArgument("predictions contain non-finite values");
    auto lo = std::get<0>(p.min(0, true));
    auto span = std::get<0>(p.max(0, true)) - lo;
    auto scaled = torch::where(span > 0, (p - lo) / torch::where(span > 0, span, torch::ones_like(span)),
                               torch::zeros_like(p));
    auto pb = discretize_codes(scaled.clamp(0.0, 1.0), bins);
    auto cb = discretize_codes(c, bins);

    const auto kp = p.size(1), k = c.size(1);
    MutualInfo out;
    out.mi = torch::zeros({kp, k}, torch::kFloat64);
    out.entropy = torch::zeros({k}, torch::kFloat64);
    out.degenerate_pred.assign(static_cast<std::size_t>(kp), false);
    out.degenerate_factor.assign(static_cast<std::size_t>(k), false);

    std::vector<std::vector<std::int64_t>> pcols, ccols;
    for (std::int64_t j = 0; j < kp; ++j) {
        pcols.push_back(bin_column(pb.select(1, j)));
        bool deg = false;
        entropy_of(pcols.back(), bins, &deg);
        out.degenerate_pred[static_cast<std::size_t>(j)] = deg;
    }
    auto mi = out.mi.accessor<double, 2>();
    auto h = out.entropy.accessor<double, 1>();
    for (std::int64_t f = 0; f < k; ++f) {
        ccols.push_back(bin_column(cb.select(1, f)));
        bool deg = false;
        h[f] = entropy_of(ccols.back(), bins, &deg);
        out.degenerate_factor[static_cast<std::size_t>(f)] = deg;
    }
    for (std::int64_t j = 0; j < kp; ++j) {
        for (std::int64_t f = 0; f < k; ++f) {
            if (out.degenerate_pred[static_cast<std::size_t>(j)] || out.degenerate_factor[static_cast<std::size_t>(f)])
                continue;
            mi[j][f] = std::min(plugin_mi(pcols[static_cast<std::size_t>(j)], ccols[static_cast<std::size_t>(f)], bins),
                                h[f]);
        }
    }
    return out;
}

MigResult mig(const torch::Tensor& preds, const torch::Tensor& codes, int bins) {
    MigResult out;
    out.info = mutual_info_matrix(preds, codes, bins);
    const auto kp = out.info.mi.size(0), k = out.info.mi.size(1);
    auto mi = out.info.mi.accessor<double, 2>();
    auto h = out.info.entropy.accessor<double, 1>();
    double total = 0.0;
    for (std::int64_t f = 0; f < k; ++f) {
        double first = 0.0, second = 0.0;
        int top = -1;
        for (std::int64_t j = 0; j < kp; ++j) {
            const double v = mi[j][f];
            if (top < 0 || v > first) {
                second = top < 0 ? 0.0 : first;
                first = v;
                top = static_cast<int>(j);
            } else if (v > second) {
                second = v;
            }
        }
        out.top.push_back(top);
        const double gap = h[f] > 0.0 ? std::clamp((first - second) / h[f], 0.0, 1.0) : 0.0;
        out.gaps.push_back(gap);
        total += gap;
    }
    out.score = k > 0 ? total / static_cast<double>(k) : 0.0;
    return out;
}

double l2_score(const torch::Tensor& preds, const torch::Tensor& codes) {
    if (preds.sizes() != codes.sizes()) throw InvalidArgument("prediction and code shapes differ");
    if (preds.size(0) == 0) throw InvalidArgument("L2 score needs at least one sample");
    auto d = preds.detach().to(torch::kFloat64) - codes.to(torch::kFloat64);
    return torch::linalg_vector_norm(d, 2, {1}, false, c10::nullopt).mean().item<double>();
}

torch::Tensor predict_batched(const EncoderFn& encoder, const torch::Tensor& images, std::int64_t batch) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::int64_t i = 0; i < images.size(0); i += batch) {
        auto end = std::min(images.size(0), i + batch);
        parts.push_back(encoder(images.slice(0, i, end)).detach().to(torch::kFloat64));
    }
    return torch::cat(parts, 0);
}

OracleEncoder::OracleEncoder(std::string name, FactorSpec spec, EncoderFn predict, std::vector<double> heldout_rms,
                             double gate)
    : name_(std::move(name)),
      spec_(std::move(spec)),
      predict_(std::move(predict)),
      heldout_rms_(std::move(heldout_rms)),
      gate_(gate) {}

double OracleEncoder::max_rms() const {
    if (heldout_rms_.empty()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (double r : heldout_rms_) {
        if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
        m = std::max(m, r);
    }
    return m;
}

void OracleEncoder::require_gate() const {
    if (!passes_gate())
        throw OracleQualityError("oracle encoder '" + name_ + "' held-out RMS " + std::to_string(max_rms()) +
                                 " exceeds gate " + std::to_string(gate_));
}

torch::Tensor OracleEncoder::predict(const torch::Tensor& images) const {
    require_gate();
    return predict_(images);
}

namespace {

// Draws codes and latents up front (so the sample stream does not depend on
// batch size), then runs generator and oracle chunk by chunk.
std::pair<torch::Tensor, torch::Tensor> generated_readout(const GeneratorFn& generator, const OracleEncoder& oracle,
                                                          int z_dim, std::int64_t n, std::int64_t batch, Rng& rng) {
    oracle.require_gate();
    auto codes = sample_codes(oracle.spec(), n, rng);
    torch::Tensor z = z_dim > 0 ? rng.normal_tensor({n, z_dim}) : torch::Tensor();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> preds;
    for (std::int64_t i = 0; i < n; i += batch) {
        auto end = std::min(n, i + batch);
        auto zc = z.defined() ? z.slice(0, i, end) : torch::Tensor();
        auto images = generator(zc, codes.slice(0, i, end));
        preds.push_back(oracle.predict(images).detach().to(torch::kFloat64));
    }
    return {torch::cat(preds, 0), codes};
}

}  // namespace

MigResult mig_gen(const GeneratorFn& generator, const OracleEncoder& oracle, int z_dim, const MetricConfig& config,
                  Rng& rng) {
    config.validate();
    auto [preds, codes] = generated_readout(generator, oracle, z_dim, config.n_mig, config.batch, rng);
    return mig(preds, codes, config.bins);
}

double l2_gen(const GeneratorFn& generator, const OracleEncoder& oracle, int z_dim, const MetricConfig& config,
              Rng& rng) {
    config.validate();
    auto [preds, codes] = generated_readout(generator, oracle, z_dim, config.n_l2, config.batch, rng);
    return l2_score(preds, codes);
}

FactorScoreResult factor_score(const RepresentationFn& represent, const FactorSpec& spec, const MetricConfig& config,
                               Rng& rng) {
    config.validate();
    const int k = spec.size();
    if (k < 1) throw InvalidArgument("factor score needs at least one factor");

    torch::NoGradGuard no_grad;
    auto global = represent(sample_codes(spec, config.factor_score_variance_samples, rng)).to(torch::kFloat64);
    if (global.dim() != 2) throw InvalidArgument("representation must be N x D");
    const auto d = global.size(1);
    auto scale = global.std(0, /*unbiased=*/false);
    auto sa = scale.accessor<double, 1>();

    FactorScoreResult out;
    std::vector<bool> usable(static_cast<std::size_t>(d), true);
    for (std::int64_t j = 0; j < d; ++j) {
        if (!(sa[j] > 1e-12)) {
            usable[static_cast<std::size_t>(j)] = false;
            out.excluded_dims.push_back(static_cast<int>(j));
        }
    }
    if (out.excluded_dims.size() == static_cast<std::size_t>(d)) {
        out.classifier.assign(static_cast<std::size_t>(d), -1);
        return out;
    }
    auto safe_scale = torch::where(scale > 1e-12, scale, torch::ones_like(scale));

    const auto vb = config.factor_score_vote_batch;
    constexpr std::int64_t kVotesPerCall = 16;
    auto cast_votes = [&](std::int64_t n_votes) {
        std::vector<std::pair<int, int>> votes;  // (argmin dim, factor)
        votes.reserve(static_cast<std::size_t>(n_votes));
        for (std::int64_t v0 = 0; v0 < n_votes; v0 += kVotesPerCall) {
            const auto count = std::min(kVotesPerCall, n_votes - v0);
            std::vector<int> fixed;
            std::vector<torch::Tensor> batches;
            for (std::int64_t v = 0; v < count; ++v) {
                const int f = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k)));
                const int level = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec[f].cardinality)));
                auto codes = sample_codes(spec, vb, rng);
                codes.select(1, f).fill_(spec.grid_value(f, level));
                fixed.push_back(f);
                batches.push_back(codes);
            }
            auto reps = represent(torch::cat(batches, 0)).to(torch::kFloat64) / safe_scale;
            for (std::int64_t v = 0; v < count; ++v) {
                auto var = reps.slice(0, v * vb, (v + 1) * vb).var(0, /*unbiased=*/false);
                auto va = var.accessor<double, 1>();
                int best = -1;
                for (std::int64_t j = 0; j < d; ++j) {
                    if (!usable[static_cast<std::size_t>(j)]) continue;
                    if (best < 0 || va[j] < va[best]) best = static_cast<int>(j);
                }
                votes.emplace_back(best, fixed[static_cast<std::size_t>(v)]);
            }
        }
        return votes;
    };

    auto train = cast_votes(config.factor_score_train);
    std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(d),
                                                  std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));
    for (auto [dim, f] : train) ++counts[static_cast<std::size_t>(dim)][static_cast<std::size_t>(f)];
    for (std::int64_t j = 0; j < d; ++j) {
        const auto& row = counts[static_cast<std::size_t>(j)];
        auto best = std::max_element(row.begin(), row.end());
        out.classifier.push_back(*best > 0 ? static_cast<int>(best - row.begin()) : -1);
    }

    auto test = cast_votes(config.factor_score_test);
    std::int64_t correct = 0;
    for (auto [dim, f] : test)
        if (out.classifier[static_cast<std::size_t>(dim)] == f) ++correct;
    out.score = static_cast<double>(correct) / static_cast<double>(test.size());
    return out;
}

std::vector<std::vector<double>> to_rows(const torch::Tensor& matrix) {
    auto m = matrix.to(torch::kFloat64).contiguous();
    std::vector<std::vector<double>> rows;
    for (std::int64_t i = 0; i < m.size(0); ++i) {
        auto r = m[i];
        rows.emplace_back(r.data_ptr<double>(), r.data_ptr<double>() + r.numel());
    }
    return rows;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("mig", mig);
    put("l2", l2);
    put("mig_gen", mig_gen);
    put("l2_gen", l2_gen);
    put("factor_score", factor_score);
    j["meta"] = meta;
    j["mi_matrix"] = mi_matrix;
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    auto get = [&](const char* key) -> std::optional<double> {
        if (j.contains(key) && !j.at(key).is_null()) return j.at(key).get<double>();
        return std::nullopt;
    };
    r.mig = get("mig");
    r.l2 = get("l2");
    r.mig_gen = get("mig_gen");
    r.l2_gen = get("l2_gen");
    r.factor_score = get("factor_score");
    r.meta = j.value("meta", nlohmann::json::object());
    if (j.contains("mi_matrix")) r.mi_matrix = j.at("mi_matrix").get<std::vector<std::vector<double>>>();
    return r;
}

}  // namespace disent
