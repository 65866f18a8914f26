#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "disent/checkpoint.hpp"
#include "disent/factor_model.hpp"
#include "disent/image_io.hpp"

namespace disent {

// One traversal row: the anchor followed by S sweep images.
struct TraversalRow {
    torch::Tensor anchor;               // 3 x R x R
    std::vector<torch::Tensor> images;  // S images, 3 x R x R
    std::vector<FactorCode> codes;      // generating code of each sweep image
};

// S uniform values on [0,1]: s / (S - 1).
std::vector<double> sweep_values(int steps);

// Code anchor: z is drawn from `z_seed` and held fixed, code entry `factor`
// is swept while all other entries keep the anchor's values.
TraversalRow latent_traversal(ModelBundle& bundle, const FactorCode& anchor, int factor, int steps,
                              std::uint64_t z_seed = 0);

// Image anchor (fine model): the remaining fine code entries come from the
// encoder's reading of the anchor image; `factor` indexes the fine factors.
TraversalRow latent_traversal(ModelBundle& bundle, const torch::Tensor& anchor_image, int factor, int steps);

// One row per anchor, first column the (marked) anchor.
RgbImage traversal_grid(const std::vector<TraversalRow>& rows);

}  // namespace disent
