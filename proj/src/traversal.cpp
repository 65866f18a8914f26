#include "disent/traversal.hpp"

#include "disent/error.hpp"
#include "disent/rng.hpp"

namespace disent {

std::vector<double> sweep_values(int steps) {
    if (steps < 2) throw InvalidArgument("traversal needs at least 2 steps");
    std::vector<double> v(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) v[static_cast<std::size_t>(s)] = static_cast<double>(s) / (steps - 1);
    return v;
}

TraversalRow latent_traversal(ModelBundle& bundle, const FactorCode& anchor, int factor, int steps,
                              std::uint64_t z_seed) {
    if (bundle.config.is_fine()) throw InvalidArgument("code-anchored traversal needs a regular generator");
    const int k = bundle.config.code_dim;
    if (factor < 0 || factor >= k) throw InvalidArgument("factor index out of range");
    if (anchor.size() != k) throw InvalidArgument("anchor code has the wrong length");
    const auto values = sweep_values(steps);

    Rng rng(z_seed);
    auto z = rng.normal_tensor({1, bundle.config.z_dim});
    TraversalRow row;
    std::vector<torch::Tensor> codes{anchor.to_tensor().unsqueeze(0)};
    for (double v : values) {
        auto c = anchor.values();
        c[static_cast<std::size_t>(factor)] = v;
        row.codes.emplace_back(c);
        codes.push_back(row.codes.back().to_tensor().unsqueeze(0));
    }
    auto batch = torch::cat(codes, 0);
    auto images = bundle.generate(z.expand({batch.size(0), -1}), batch);
    row.anchor = images[0];
    for (int s = 0; s < steps; ++s) row.images.push_back(images[s + 1]);
    return row;
}

TraversalRow latent_traversal(ModelBundle& bundle, const torch::Tensor& anchor_image, int factor, int steps) {
    if (!bundle.config.is_fine()) throw InvalidArgument("image-anchored traversal needs a fine generator");
    const int kf = bundle.config.conditioning_dim();
    if (factor < 0 || factor >= kf) throw InvalidArgument("factor index out of range");
    const int R = bundle.config.resolution;
    if (anchor_image.dim() != 3 || anchor_image.size(0) != 3 || anchor_image.size(1) != R || anchor_image.size(2) != R)
        throw InvalidArgument("anchor image must be 3 x R x R");
    const auto values = sweep_values(steps);

    torch::NoGradGuard no_grad;
    // Encoder readings can overshoot the code cube; clamp them back onto it.
    auto base = bundle.de->forward(anchor_image.unsqueeze(0)).code[0].to(torch::kFloat64).clamp(0.0, 1.0);
    TraversalRow row;
    row.anchor = anchor_image;
    std::vector<torch::Tensor> codes;
    for (double v : values) {
        auto c = base.clone();
        c[factor] = v;
        row.codes.push_back(FactorCode::from_tensor(c));
        codes.push_back(c.to(torch::kFloat32).unsqueeze(0));
    }
    auto batch = torch::cat(codes, 0);
    auto images = fine_generate(bundle.generator, anchor_image.unsqueeze(0).expand({steps, -1, -1, -1}), batch);
    for (int s = 0; s < steps; ++s) row.images.push_back(images[s]);
    return row;
}

RgbImage traversal_grid(const std::vector<TraversalRow>& rows) {
    if (rows.empty()) throw InvalidArgument("traversal grid needs at least one row");
    const int columns = static_cast<int>(rows.front().images.size()) + 1;
    std::vector<RgbImage> cells;
    std::vector<bool> marked;
    for (const auto& r : rows) {
        if (static_cast<int>(r.images.size()) + 1 != columns)
            throw InvalidArgument("traversal rows must have equal lengths");
        cells.push_back(from_tensor(r.anchor));
        marked.push_back(true);
        for (const auto& img : r.images) {
            cells.push_back(from_tensor(img));
            marked.push_back(false);
        }
    }
    return tile_images(cells, columns, marked);
}

}  // namespace disent
