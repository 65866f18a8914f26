#pragma once

#include <cstdint>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/rng.hpp"

namespace disent {

struct LossWeights {
    double gamma_g = 10.0;   // L_unsup weight in the generator objective
    double gamma_e = 0.0;    // L_unsup weight in the discriminator/encoder objective
    double beta = 10.0;      // L_sup weight
    double alpha = 1.0;      // smoothness weight
    double xi = 0.75;        // MixUp Beta(xi, xi) concentration
    double r1_gamma = 10.0;  // R1 penalty weight

    // gamma_G = beta = gamma, gamma_E = 0, alpha = 1, xi = 0.75.
    static LossWeights defaults(double gamma = 10.0);

    void validate() const;
    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

struct GanLosses {
    torch::Tensor generator;      // mean softplus(-D(fake))
    torch::Tensor discriminator;  // mean softplus(D(fake)) + mean softplus(-D(real)) + r1
    torch::Tensor r1;             // (r1_gamma / 2) * mean ||grad_x D(real)||^2
};

// Non-saturating logistic GAN loss with R1 on the real batch. `real_images`
// must be the tensor real_scores was computed from and require grad; pass an
// undefined tensor or r1_gamma = 0 to skip R1.
GanLosses gan_losses(const torch::Tensor& real_scores, const torch::Tensor& fake_scores,
                     const torch::Tensor& real_images, double r1_gamma);

torch::Tensor r1_penalty(const torch::Tensor& real_scores, const torch::Tensor& real_images, double r1_gamma);

// Batch mean of per-sample Euclidean distances.
torch::Tensor code_l2(const torch::Tensor& predicted, const torch::Tensor& target);

// E(G(c, z)) against the codes c the generator was conditioned on.
torch::Tensor unsup_code_loss(const torch::Tensor& predicted_on_generated, const torch::Tensor& codes);

struct SupervisedLoss {
    torch::Tensor value;
    bool has_supervision = false;
};

// E(x) against ground-truth codes of labeled real images. An empty batch
// gives zero with has_supervision = false.
SupervisedLoss sup_code_loss(const torch::Tensor& predicted_on_labeled, const torch::Tensor& codes);

// A batch of mixed observation-code pairs.
struct MixedPair {
    torch::Tensor x_tilde;       // B x 3 x H x W
    torch::Tensor c_tilde;       // B x K
    torch::Tensor lambda_prime;  // B, each in [0.5, 1]
};

// lambda ~ Beta(xi, xi), returns max(lambda, 1 - lambda) for n draws.
torch::Tensor sample_mix_weights(std::int64_t n, double xi, Rng& rng);

// Convex combination weighted lambda' towards the labeled real pair (x, c).
MixedPair mix_pairs(const torch::Tensor& x, const torch::Tensor& c, const torch::Tensor& x_gen,
                    const torch::Tensor& c_gen, const torch::Tensor& lambda_prime);

MixedPair mixup_pair(const torch::Tensor& x, const torch::Tensor& c, const torch::Tensor& x_gen,
                     const torch::Tensor& c_gen, double xi, Rng& rng);

// E(x~) against c~.
torch::Tensor smoothness_loss(const torch::Tensor& predicted_on_mixed, const torch::Tensor& c_tilde);

// Component scalars of both objectives. The unsupervised and smoothness
// terms are usually evaluated in separate passes for the two players, so each
// side has its own slot.
struct ObjectiveTerms {
    torch::Tensor gan_g, gan_de;
    torch::Tensor unsup_g, unsup_de;
    torch::Tensor sup;
    torch::Tensor sr_g, sr_de;

    // Same scalar on both sides of each shared term.
    static ObjectiveTerms shared(const torch::Tensor& gan_g, const torch::Tensor& gan_de, const torch::Tensor& unsup,
                                 const torch::Tensor& sup, const torch::Tensor& sr);
};

struct Objectives {
    torch::Tensor generator;  // L_GAN + gamma_G L_unsup + alpha L_sr
    torch::Tensor de;         // L_GAN + gamma_E L_unsup + beta L_sup + alpha L_sr
};

Objectives assemble_objectives(const ObjectiveTerms& terms, const LossWeights& weights);

}  // namespace disent
