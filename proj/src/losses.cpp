#include "disent/losses.hpp"

#include "disent/error.hpp"

namespace disent {

namespace F = torch::nn::functional;

LossWeights LossWeights::defaults(double gamma) {
    LossWeights w;
    w.gamma_g = gamma;
    w.beta = gamma;
    w.gamma_e = 0.0;
    w.alpha = 1.0;
    w.xi = 0.75;
    return w;
}

void LossWeights::validate() const {
    if (gamma_g < 0 || gamma_e < 0 || beta < 0 || alpha < 0 || r1_gamma < 0)
        throw InvalidArgument("loss weights must be nonnegative");
    if (!(xi > 0)) throw InvalidArgument("MixUp concentration xi must be positive");
}

nlohmann::json LossWeights::to_json() const {
    return {{"gamma_g", gamma_g}, {"gamma_e", gamma_e}, {"beta", beta},
            {"alpha", alpha},     {"xi", xi},           {"r1_gamma", r1_gamma}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.gamma_g = j.value("gamma_g", w.gamma_g);
    w.gamma_e = j.value("gamma_e", w.gamma_e);
    w.beta = j.value("beta", w.beta);
    w.alpha = j.value("alpha", w.alpha);
    w.xi = j.value("xi", w.xi);
    w.r1_gamma = j.value("r1_gamma", w.r1_gamma);
    return w;
}

torch::Tensor r1_penalty(const torch::Tensor& real_scores, const torch::Tensor& real_images, double r1_gamma) {
    if (!real_images.defined() || r1_gamma == 0.0) return torch::zeros({}, real_scores.options());
    if (!real_images.requires_grad()) throw InvalidArgument("R1 needs real images that require grad");
    auto grads = torch::autograd::grad({real_scores.sum()}, {real_images}, /*grad_outputs=*/{},
                                       /*retain_graph=*/true, /*create_graph=*/true)[0];
    return 0.5 * r1_gamma * grads.pow(2).flatten(1).sum(1).mean();
}

GanLosses gan_losses(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                     const torch::Tensor& real_images, double r1_gamma) {
    GanLosses out;
    out.generator = F::softplus(-fake_scores).mean();
    out.r1 = r1_penalty(real_scores, real_images, r1_gamma);
    out.discriminator = F::softplus(fake_scores).mean() + F::softplus(-real_scores).mean() + out.r1;
    return out;
}

torch::Tensor code_l2(const torch::Tensor& predicted, const torch::Tensor& target) {
    if (predicted.sizes() != target.sizes())
        throw InvalidArgument("code prediction and target shapes differ");
    if (predicted.size(0) == 0) return torch::zeros({}, predicted.options());
    return torch::linalg_vector_norm(predicted - target.to(predicted.dtype()), 2, {1}, false, c10::nullopt).mean();
}

torch::Tensor unsup_code_loss(const torch::Tensor& predicted_on_generated, const torch::Tensor& codes) {
    return code_l2(predicted_on_generated, codes);
}

SupervisedLoss sup_code_loss(const torch::Tensor& predicted_on_labeled, const torch::Tensor& codes) {
    SupervisedLoss out;
    if (!predicted_on_labeled.defined() || predicted_on_labeled.numel() == 0) {
        out.value = torch::zeros({});
        return out;
    }
    out.value = code_l2(predicted_on_labeled, codes);
    out.has_supervision = true;
    return out;
}

torch::Tensor sample_mix_weights(std::int64_t n, double xi, Rng& rng) {
    if (!(xi > 0)) throw InvalidArgument("MixUp concentration xi must be positive");
    auto out = torch::empty({n}, torch::kFloat64);
    auto* p = out.data_ptr<double>();
    for (std::int64_t i = 0; i < n; ++i) {
        const double lambda = rng.beta(xi, xi);
        p[i] = std::max(lambda, 1.0 - lambda);
    }
    return out;
}

MixedPair mix_pairs(const torch::Tensor& x, const torch::Tensor& c, const torch::Tensor& x_gen,
                    const torch::Tensor& c_gen, const torch::Tensor& lambda_prime) {
    if (x.sizes() != x_gen.sizes() || c.sizes() != c_gen.sizes() || lambda_prime.size(0) != x.size(0))
        throw InvalidArgument("mix_pairs: batch shapes differ");
    MixedPair m;
    m.lambda_prime = lambda_prime;
    auto lx = lambda_prime.to(x.dtype()).view({-1, 1, 1, 1});
    auto lc = lambda_prime.to(c.dtype()).view({-1, 1});
    m.x_tilde = lx * x + (1 - lx) * x_gen;
    m.c_tilde = lc * c + (1 - lc) * c_gen.to(c.dtype());
    return m;
}

MixedPair mixup_pair(const torch::Tensor& x, const torch::Tensor& c, const torch::Tensor& x_gen,
                     const torch::Tensor& c_gen, double xi, Rng& rng) {
    return mix_pairs(x, c, x_gen, c_gen, sample_mix_weights(x.size(0), xi, rng));
}

torch::Tensor smoothness_loss(const torch::Tensor& predicted_on_mixed, const torch::Tensor& c_tilde) {
    return code_l2(predicted_on_mixed, c_tilde);
}

ObjectiveTerms ObjectiveTerms::shared(const torch::Tensor& gan_g, const torch::Tensor& gan_de,
                                      const torch::Tensor& unsup, const torch::Tensor& sup, const torch::Tensor& sr) {
    return {gan_g, gan_de, unsup, unsup, sup, sr, sr};
}

Objectives assemble_objectives(const ObjectiveTerms& t, const LossWeights& w) {
    w.validate();
    auto val = [](const torch::Tensor& x) { return x.defined() ? x : torch::zeros({}); };
    Objectives o;
    o.generator = val(t.gan_g) + w.gamma_g * val(t.unsup_g) + w.alpha * val(t.sr_g);
    o.de = val(t.gan_de) + w.gamma_e * val(t.unsup_de) + w.beta * val(t.sup) + w.alpha * val(t.sr_de);
    return o;
}

}  // namespace disent
