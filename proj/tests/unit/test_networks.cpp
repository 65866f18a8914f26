#include "../common/testing.hpp"

#include "disent/error.hpp"
#include "disent/networks.hpp"
#include "disent/rng.hpp"

using namespace disent;

namespace {

NetworkConfig tiny(int resolution = 16, int code_dim = 5) {
    NetworkConfig c;
    c.n_mp = 2;
    c.f_mp = 16;
    c.f_0 = 8;
    c.resolution = resolution;
    c.z_dim = 6;
    c.code_dim = code_dim;
    return c;
}

NetworkConfig tiny_fine(int resolution, int phi, std::vector<int> fine) {
    auto c = tiny(resolution);
    c.fine_cutoff = phi;
    c.fine_factors = std::move(fine);
    return c;
}

bool contains(const std::vector<torch::Tensor>& set, const torch::Tensor& t) {
    for (const auto& s : set)
        if (s.is_same(t)) return true;
    return false;
}

}  // namespace

TEST_CASE("network config invariants") {
    auto c = NetworkConfig::small_preset(64, 7);
    CHECK(c.mapping_input_dim() == 135);
    CHECK(c.num_blocks() == 5);
    CHECK(NetworkConfig::small_preset(128, 7).num_blocks() == 6);
    CHECK(c.channels(4) == c.f_0);
    CHECK(c.channels(32) == c.f_0);
    CHECK(c.channels(64) == c.f_0 / 2);
    CHECK(c.channels(128) == c.f_0 / 4);
    CHECK(NetworkConfig::from_json(c.to_json()) == c);

    auto bad = c;
    bad.resolution = 48;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = c;
    bad.n_mp = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = c;
    bad.fine_cutoff = 64;
    bad.fine_factors = {2};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.fine_cutoff = 2;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.fine_cutoff = 16;
    bad.fine_factors = {};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("adain normalises to the style statistics") {
    torch::manual_seed(0);
    auto x = torch::randn({4, 8, 8}, torch::kFloat64) * 3 + 1;
    SUBCASE("identity style") {
        auto y = adain(x, torch::ones({4}, torch::kFloat64), torch::zeros({4}, torch::kFloat64));
        auto mean = y.mean({1, 2});
        auto std = y.std({1, 2}, /*unbiased=*/false);
        CHECK(mean.abs().max().item<double>() <= 1e-5);
        CHECK((std - 1).abs().max().item<double>() <= 1e-5);
    }
    SUBCASE("scale 2, bias 0.5") {
        auto y = adain(x, torch::full({4}, 2.0, torch::kFloat64), torch::full({4}, 0.5, torch::kFloat64));
        CHECK((y.mean({1, 2}) - 0.5).abs().max().item<double>() <= 1e-5);
        CHECK((y.std({1, 2}, false) - 2).abs().max().item<double>() <= 1e-4);
    }
    SUBCASE("constant channel maps to the bias") {
        auto c = torch::full({2, 5, 5}, 3.25);
        auto y = adain(c, torch::tensor({1.5f, -2.0f}), torch::tensor({0.25f, -1.0f}));
        CHECK(torch::equal(y[0], torch::full({5, 5}, 0.25f)));
        CHECK(torch::equal(y[1], torch::full({5, 5}, -1.0f)));
        CHECK(torch::isfinite(y).all().item<bool>());
    }
    CHECK_THROWS_AS(adain(x, torch::ones({3}, torch::kFloat64), torch::zeros({3}, torch::kFloat64)),
                    InvalidArgument);
}

TEST_CASE("mapping network is deterministic and conditioned on the code") {
    torch::manual_seed(1);
    Generator g(tiny());
    Rng rng(2);
    auto z = rng.normal_tensor({3, 6});
    auto c = torch::rand({3, 5});
    auto a = g->map_styles(z, c);
    auto b = g->map_styles(z, c);
    CHECK(torch::equal(a.w, b.w));
    CHECK(a.sites.size() == static_cast<std::size_t>(2 * tiny().num_blocks()));
    auto c2 = c.clone();
    c2.select(1, 3).add_(0.25);
    CHECK_FALSE(torch::equal(g->map_styles(z, c2).w, a.w));
    CHECK_THROWS_AS(g->map_styles(rng.normal_tensor({3, 7}), c), InvalidArgument);
    CHECK_THROWS_AS(g->map_styles(z, torch::rand({3, 4})), InvalidArgument);
}

TEST_CASE("generator output shape, range and determinism") {
    torch::manual_seed(3);
    auto cfg = tiny(64);
    Generator g(cfg);
    Rng rng(4);
    auto z = rng.normal_tensor({2, cfg.z_dim});
    auto c = torch::rand({2, cfg.code_dim});
    auto x = g->forward(z, c);
    CHECK(x.sizes() == torch::IntArrayRef({2, 3, 64, 64}));
    CHECK(x.abs().max().item<float>() <= 1.0f);
    CHECK(torch::equal(x, g->forward(z, c)));
    CHECK(g->modulated_resolutions() == std::vector<int>{4, 8, 16, 32, 64});
    CHECK(g->forward(z, c, 16).sizes() == torch::IntArrayRef({2, 3, 16, 16}));
    CHECK(g->forward(z, c, 32, 0.5).sizes() == torch::IntArrayRef({2, 3, 32, 32}));
    CHECK_THROWS_AS(g->forward(z, c, 12), InvalidArgument);
}

TEST_CASE("progressive fade endpoints") {
    torch::manual_seed(5);
    auto cfg = tiny(16);
    Generator g(cfg);
    DiscriminatorEncoder de(cfg);
    Rng rng(6);
    auto z = rng.normal_tensor({2, cfg.z_dim});
    auto c = torch::rand({2, cfg.code_dim});
    auto full = g->forward(z, c, 16, 1.0);
    auto faded = g->forward(z, c, 16, 0.0);
    auto low = upsample(g->forward(z, c, 8, 1.0), 2);
    CHECK(torch::allclose(faded, low, 1e-6, 1e-6));
    CHECK_FALSE(torch::allclose(full, faded));

    auto x = torch::rand({2, 3, 16, 16}) * 2 - 1;
    auto d0 = de->forward(x, 16, 0.0).realness;
    auto d1 = de->forward(x, 16, 1.0).realness;
    CHECK_FALSE(torch::allclose(d0, d1));
}

TEST_CASE("discriminator and encoder share every layer except the heads") {
    torch::manual_seed(7);
    auto cfg = tiny(16);
    DiscriminatorEncoder de(cfg);
    auto trunk = de->trunk_parameters();
    auto real_head = de->realness_head_parameters();
    auto code_head = de->code_head_parameters();
    CHECK(trunk.size() + real_head.size() + code_head.size() == de->parameters().size());
    for (const auto& p : real_head) CHECK_FALSE(contains(trunk, p));
    for (const auto& p : code_head) CHECK_FALSE(contains(trunk, p));

    // Both heads backpropagate into the very same trunk tensors.
    auto x = torch::rand({2, 3, 16, 16}) * 2 - 1;
    auto out = de->forward(x);
    CHECK(out.realness.sizes() == torch::IntArrayRef({2}));
    CHECK(out.code.sizes() == torch::IntArrayRef({2, cfg.code_dim}));
    auto g_real = torch::autograd::grad({out.realness.sum()}, trunk, {}, true, false, true);
    auto g_code = torch::autograd::grad({out.code.sum()}, trunk, {}, true, false, true);
    // Lower-resolution from_rgb layers only act during fade-in; everything
    // else on the full-resolution path is reached by both heads.
    auto named = de->named_parameters();
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        std::string name;
        for (const auto& item : named)
            if (item.value().is_same(trunk[i])) name = item.key();
        CAPTURE(name);
        const bool fade_only = name.rfind("from_rgb", 0) == 0 && name.rfind("from_rgb16", 0) != 0;
        CHECK(g_real[i].defined() == !fade_only);
        CHECK(g_code[i].defined() == !fade_only);
    }
    // Dense head stack 16 f_0 -> 64 -> (1, K).
    CHECK(named["dense.weight"].sizes() == torch::IntArrayRef({64, 16 * cfg.channels(4)}));
    CHECK(named["realness_head.weight"].sizes() == torch::IntArrayRef({1, 64}));
    CHECK(named["code_head.weight"].sizes() == torch::IntArrayRef({cfg.code_dim, 64}));
    // Two 3x3 convolutions per resolution block.
    for (int res : {16, 8}) {
        CHECK(named["conv" + std::to_string(res) + "a.weight"].size(-1) == 3);
        CHECK(named["conv" + std::to_string(res) + "b.weight"].size(-1) == 3);
    }
    CHECK(torch::equal(de->forward(x).code, de->forward(x.clone()).code));
    CHECK_THROWS_AS(de->forward(torch::rand({2, 3, 8, 8})), InvalidArgument);
}

TEST_CASE("generator blocks carry two AdaIN sites") {
    torch::manual_seed(8);
    Generator g(tiny(16));
    auto named = g->named_parameters();
    for (int res : {4, 8, 16}) {
        const auto b = "block" + std::to_string(res);
        CHECK(named.contains(b + ".conv1.weight"));
        CHECK(named.contains(b + ".conv2.weight"));
        CHECK(named.contains(b + ".style1.weight"));
        CHECK(named.contains(b + ".style2.weight"));
    }
    CHECK(named.contains("const"));
}

TEST_CASE("fine generator modulates only blocks above the cutoff") {
    CHECK(build_fine_generator(tiny_fine(256, 64, {0}))->modulated_resolutions() == std::vector<int>{128, 256});
    CHECK(build_fine_generator(tiny_fine(32, 16, {0}))->modulated_resolutions() == std::vector<int>{32});
    CHECK_THROWS_AS(build_fine_generator(tiny_fine(32, 32, {0})), InvalidArgument);
    CHECK_THROWS_AS(build_fine_generator(tiny(32)), InvalidArgument);

    auto g = build_fine_generator(tiny_fine(32, 8, {1, 3}));
    CHECK(g->mapping->input_dim() == 2);
    CHECK_FALSE(g->named_parameters().contains("const"));
}

TEST_CASE("fine generator sees only the downsampled image") {
    torch::manual_seed(9);
    auto cfg = tiny_fine(32, 8, {0, 2});
    auto g = build_fine_generator(cfg);
    // Dyadic pixel values keep the box averages exact.
    auto base = torch::randint(-32, 32, {2, 3, 8, 8}).to(torch::kFloat32) / 64.0;
    auto a = upsample(base, 4);
    auto pattern = torch::tensor({1.0f, -1.0f}).repeat({16}).unsqueeze(0);
    pattern = (pattern.t().matmul(pattern)) / 64.0;  // +-1/64 checkerboard, zero mean per block
    auto b = a + pattern;
    REQUIRE(torch::equal(downsample(a, 8), downsample(b, 8)));
    REQUIRE_FALSE(torch::equal(a, b));
    auto code = torch::rand({2, 2});
    auto ya = fine_generate(g, a, code);
    auto yb = fine_generate(g, b, code);
    CHECK(torch::equal(ya, yb));
    CHECK(ya.sizes() == torch::IntArrayRef({2, 3, 32, 32}));
    CHECK(torch::equal(ya, fine_generate(g, a, code)));
    CHECK_THROWS_AS(fine_generate(g, torch::rand({3, 16, 16}), code[0]), InvalidArgument);
    CHECK_THROWS_AS(fine_generate(g, a, torch::rand({2, 3})), InvalidArgument);
}

TEST_CASE("fine encoder reads the cutoff feature map") {
    torch::manual_seed(10);
    auto cfg = tiny_fine(32, 8, {0, 2, 4});
    DiscriminatorEncoder de(cfg);
    auto x = torch::rand({2, 3, 32, 32}) * 2 - 1;
    auto h = de->code_head_input(x);
    CHECK(h.size(2) == 8);
    CHECK(h.size(3) == 8);
    auto out = de->forward(x);
    CHECK(out.code.sizes() == torch::IntArrayRef({2, 3}));
    CHECK(out.realness.sizes() == torch::IntArrayRef({2}));
    auto x2 = x.clone();
    x2.slice(2, 0, 4).mul_(-1);
    CHECK_FALSE(torch::equal(de->code_head_input(x2), h));
}

TEST_CASE("downsample is an area average") {
    auto x = torch::arange(16, torch::kFloat32).reshape({1, 1, 4, 4});
    auto d = downsample(x, 2);
    CHECK(d.flatten().equal(torch::tensor({2.5f, 4.5f, 10.5f, 12.5f})));
    CHECK_THROWS_AS(downsample(x, 3), InvalidArgument);
    CHECK(upsample(d, 2).sizes() == torch::IntArrayRef({1, 1, 4, 4}));
}
