#include "../common/testing.hpp"

#include <boost/math/special_functions/beta.hpp>

#include "../common/loss_probes.hpp"
#include "disent/error.hpp"
#include "disent/losses.hpp"

using namespace disent;

namespace {

torch::Tensor scalar(double v) { return torch::tensor(v, torch::kFloat64); }

// E[max(l, 1 - l)] for l ~ Beta(a, a), by symmetry 1 - I_{1/2}(a + 1, a).
double folded_beta_mean(double a) { return 1.0 - boost::math::ibeta(a + 1.0, a, 0.5); }

}  // namespace

TEST_CASE("objective assembly follows the weighted sums") {
    auto w = LossWeights::defaults();
    CHECK(w.gamma_g == 10.0);
    CHECK(w.beta == 10.0);
    CHECK(w.gamma_e == 0.0);
    CHECK(w.alpha == 1.0);
    CHECK(w.xi == 0.75);

    ObjectiveTerms t{scalar(0.5), scalar(1.25), scalar(0.125), scalar(0.375), scalar(0.25), scalar(0.0625),
                     scalar(0.03125)};
    SUBCASE("defaults") {
        auto o = assemble_objectives(t, w);
        CHECK(o.generator.item<double>() == 0.5 + 10 * 0.125 + 0.0625);
        CHECK(o.de.item<double>() == 1.25 + 0 * 0.375 + 10 * 0.25 + 0.03125);
    }
    SUBCASE("arbitrary weights") {
        w.gamma_g = 3;
        w.gamma_e = 2;
        w.beta = 0.5;
        w.alpha = 4;
        auto o = assemble_objectives(t, w);
        CHECK(o.generator.item<double>() == doctest::Approx(0.5 + 3 * 0.125 + 4 * 0.0625).epsilon(1e-12));
        CHECK(o.de.item<double>() == doctest::Approx(1.25 + 2 * 0.375 + 0.5 * 0.25 + 4 * 0.03125).epsilon(1e-12));
    }
    SUBCASE("zero weights drop their terms") {
        w.gamma_g = w.gamma_e = w.beta = w.alpha = 0;
        auto o = assemble_objectives(t, w);
        CHECK(o.generator.item<double>() == 0.5);
        CHECK(o.de.item<double>() == 1.25);
    }
    SUBCASE("missing terms count as zero") {
        ObjectiveTerms partial;
        partial.gan_g = scalar(0.5);
        partial.gan_de = scalar(0.75);
        auto o = assemble_objectives(partial, w);
        CHECK(o.generator.item<double>() == 0.5);
        CHECK(o.de.item<double>() == 0.75);
    }
    w.alpha = -1;
    CHECK_THROWS_AS(assemble_objectives(t, w), InvalidArgument);
}

TEST_CASE("loss weights JSON round trip") {
    LossWeights w;
    w.gamma_g = 1.5;
    w.xi = 0.3;
    auto back = LossWeights::from_json(w.to_json());
    CHECK(back.gamma_g == 1.5);
    CHECK(back.xi == 0.3);
    CHECK(back.beta == w.beta);
}

TEST_CASE("code losses are batch means of Euclidean distances") {
    auto pred = torch::tensor({{0.0, 0.0}, {1.0, 1.0}}, torch::kFloat64);
    auto target = torch::tensor({{3.0, 4.0}, {1.0, 1.0}}, torch::kFloat64);
    CHECK(code_l2(pred, target).item<double>() == 2.5);
    CHECK(unsup_code_loss(pred, target).item<double>() == 2.5);
    CHECK(smoothness_loss(pred, target).item<double>() == 2.5);
    auto sup = sup_code_loss(pred, target);
    CHECK(sup.has_supervision);
    CHECK(sup.value.item<double>() == 2.5);
    auto none = sup_code_loss(torch::empty({0, 2}), torch::empty({0, 2}));
    CHECK_FALSE(none.has_supervision);
    CHECK(none.value.item<double>() == 0.0);
    CHECK_THROWS_AS(code_l2(pred, torch::zeros({2, 3})), InvalidArgument);
}

TEST_CASE("GAN losses match the softplus formulas") {
    auto real = torch::tensor({0.5, -1.0}, torch::kFloat64);
    auto fake = torch::tensor({2.0, 0.0}, torch::kFloat64);
    auto sp = [](double x) { return std::log1p(std::exp(x)); };
    auto g = gan_losses(real, fake, {}, 10.0);
    CHECK(g.generator.item<double>() == doctest::Approx((sp(-2.0) + sp(0.0)) / 2).epsilon(1e-12));
    CHECK(g.discriminator.item<double>() ==
          doctest::Approx((sp(2.0) + sp(0.0)) / 2 + (sp(-0.5) + sp(1.0)) / 2).epsilon(1e-12));
    CHECK(g.r1.item<double>() == 0.0);
}

TEST_CASE("R1 equals half gamma times the mean squared input gradient") {
    // D(x) = sum(a * x) has input gradient a everywhere.
    auto x = torch::randn({3, 4}, torch::kFloat64).requires_grad_(true);
    auto a = torch::tensor({1.0, -2.0, 0.5, 0.0}, torch::kFloat64);
    auto scores = (x * a).sum(1);
    auto r1 = r1_penalty(scores, x, 10.0);
    CHECK(r1.item<double>() == doctest::Approx(5.0 * (1 + 4 + 0.25)).epsilon(1e-12));
    CHECK(r1_penalty(scores, x, 0.0).item<double>() == 0.0);
    CHECK_THROWS_AS(r1_penalty(scores, x.detach(), 10.0), InvalidArgument);
}

TEST_CASE("loss gradients agree with finite differences") {
    torch::manual_seed(11);
    for (auto dtype : {torch::kFloat64, torch::kFloat32}) {
        const bool f64 = dtype == torch::kFloat64;
        const double h = f64 ? 1e-6 : 1e-2;
        const double tol = f64 ? 1e-6 : 1e-3;
        auto opts = torch::TensorOptions().dtype(dtype);
        CAPTURE(f64);

        {  // code L2
            auto pred = torch::rand({4, 3}, opts).requires_grad_(true);
            auto target = torch::rand({4, 3}, opts);
            CHECK(test::gradcheck_error([&] { return code_l2(pred, target); }, {pred}, h) < tol);
        }
        {  // GAN losses
            auto real = torch::randn({5}, opts).requires_grad_(true);
            auto fake = torch::randn({5}, opts).requires_grad_(true);
            CHECK(test::gradcheck_error([&] { return gan_losses(real, fake, {}, 0).discriminator; }, {real, fake}, h) <
                  tol);
            CHECK(test::gradcheck_error([&] { return gan_losses(real, fake, {}, 0).generator; }, {fake}, h) < tol);
        }
        {  // MixUp smoothness through the mixing
            auto x = torch::rand({3, 2}, opts);
            auto xg = torch::rand({3, 2}, opts).requires_grad_(true);
            auto w = torch::randn({2, 2}, opts).requires_grad_(true);
            auto lam = torch::tensor({0.6, 0.9, 0.75}, opts);
            auto loss = [&] {
                auto m = mix_pairs(x.view({3, 2, 1, 1}), x, xg.view({3, 2, 1, 1}), xg, lam);
                return smoothness_loss(m.x_tilde.view({3, 2}).matmul(w), m.c_tilde);
            };
            CHECK(test::gradcheck_error(loss, {xg, w}, h) < tol);
        }
    }
}

TEST_CASE("network loss gradients agree with finite differences") {
    for (auto dtype : {torch::kFloat64, torch::kFloat32}) {
        const double tol = dtype == torch::kFloat64 ? 1e-6 : 1e-3;
        for (const auto& probe : test::loss_gradient_errors(dtype, 21)) {
            CAPTURE(probe.loss);
            CAPTURE(probe.error);
            CHECK(probe.error < tol);
        }
    }
}

TEST_CASE("objective reductions hold on random tiny models") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(test::reduction_identity_error(seed) <= 1e-6);
}

TEST_CASE("MixUp weights follow the folded Beta distribution") {
    Rng rng(2024);
    const double xi = 0.75;
    auto lam = sample_mix_weights(1000000, xi, rng);
    CHECK(lam.min().item<double>() >= 0.5);
    CHECK(lam.max().item<double>() <= 1.0);
    CHECK(std::abs(lam.mean().item<double>() - folded_beta_mean(xi)) <= 0.005);

    // A different concentration shifts the mean as predicted.
    auto lam2 = sample_mix_weights(200000, 2.0, rng);
    CHECK(std::abs(lam2.mean().item<double>() - folded_beta_mean(2.0)) <= 0.005);
    CHECK_THROWS_AS(sample_mix_weights(3, 0.0, rng), InvalidArgument);
}

TEST_CASE("mixed pairs are convex combinations towards the real pair") {
    torch::manual_seed(12);
    auto x = torch::rand({6, 3, 4, 4}) * 2 - 1;
    auto xg = torch::rand({6, 3, 4, 4}) * 2 - 1;
    auto c = torch::rand({6, 5});
    auto cg = torch::rand({6, 5});
    Rng rng(3);
    auto m = mixup_pair(x, c, xg, cg, 0.75, rng);
    auto lo = torch::minimum(c, cg) - 1e-6, hi = torch::maximum(c, cg) + 1e-6;
    CHECK(((m.c_tilde >= lo) & (m.c_tilde <= hi)).all().item<bool>());
    auto xlo = torch::minimum(x, xg) - 1e-6, xhi = torch::maximum(x, xg) + 1e-6;
    CHECK(((m.x_tilde >= xlo) & (m.x_tilde <= xhi)).all().item<bool>());
    // Real pair dominates: at least as close to (x, c) as to (x_gen, c_gen).
    CHECK(((m.c_tilde - c).abs() <= (m.c_tilde - cg).abs() + 1e-6).all().item<bool>());

    auto one = mix_pairs(x, c, xg, cg, torch::ones({6}, torch::kFloat64));
    CHECK(torch::equal(one.x_tilde, x));
    CHECK(torch::equal(one.c_tilde, c));
    auto half = mix_pairs(x, c, xg, cg, torch::full({6}, 0.5, torch::kFloat64));
    CHECK(torch::allclose(half.c_tilde, (c + cg) / 2));
    CHECK_THROWS_AS(mix_pairs(x, c, xg.slice(0, 0, 5), cg, torch::ones({6})), InvalidArgument);
}
