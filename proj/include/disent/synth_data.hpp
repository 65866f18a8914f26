#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "disent/factor_model.hpp"
#include "disent/image_io.hpp"

namespace disent {

// Shapes2D-mini: a flat procedural scene with one object over a tinted wall.
// Factor order is fixed: object_shape(3), object_scale(4), object_hue(4),
// wall_hue(4), x_position(8), y_position(5), brightness(4).
struct SceneSpec {
    int resolution = 64;

    SceneSpec() = default;
    explicit SceneSpec(int res);

    const FactorSpec& factors() const;
    static const FactorSpec& factor_spec();

    // Factor indices, in schema order.
    enum FactorIndex : int {
        kShape = 0,
        kScale = 1,
        kObjectHue = 2,
        kWallHue = 3,
        kX = 4,
        kY = 5,
        kBrightness = 6,
    };
    static constexpr int kNumFactors = 7;
};

enum class Shape : int { kCircle = 0, kSquare = 1, kTriangle = 2 };

// Deterministic 4x4-supersampled raster of `code`. Throws InvalidArgument for
// codes of the wrong length or off the factor grid.
RgbImage render_scene_rgb(const FactorCode& code, const SceneSpec& spec);
// Same raster mapped to a 3xRxR tensor in [-1,1].
torch::Tensor render_scene(const FactorCode& code, const SceneSpec& spec);
// Renders each row of an N x K code matrix; returns N x 3 x R x R.
torch::Tensor render_batch(const torch::Tensor& codes, const SceneSpec& spec);

struct AnalyticEstimate {
    FactorCode code;
    bool low_confidence = false;
    // Largest distance (in grid steps) between a raw estimate and the grid
    // value it was snapped to; 0 for an exact renderer output.
    double snap_residual = 0.0;
    // Mean absolute colour error of the corner pixels against the best wall
    // template, in 8-bit units.
    double wall_residual = 0.0;
};

// Inverts render_scene from pixel statistics alone (corner colours, object
// colour, silhouette moments).
AnalyticEstimate analytic_encode(const torch::Tensor& image, const SceneSpec& spec);
AnalyticEstimate analytic_encode(const RgbImage& image, const SceneSpec& spec);
// Row-wise analytic_encode over N x 3 x R x R; returns N x K (float64).
torch::Tensor analytic_encode_batch(const torch::Tensor& images, const SceneSpec& spec);

struct DatasetManifest {
    static constexpr int kLayoutVersion = 1;

    std::string name;
    FactorSpec spec;
    int resolution = 0;
    std::int64_t count = 0;
    std::uint64_t seed = 0;
    int layout_version = kLayoutVersion;
    std::string digest;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Enumerates the full factor grid and writes <out>/manifest.json,
// <out>/codes.csv and <out>/images/%07d.png. The manifest is written last; on
// failure every file created by this call is removed again.
DatasetManifest generate_dataset(const SceneSpec& spec, const std::filesystem::path& out_dir, std::uint64_t seed);

std::string image_filename(std::int64_t index);

// Random-access view of a dataset directory, or of in-memory arrays.
class Dataset {
public:
    // Validates the manifest, the code table and the presence of every image.
    static Dataset load(const std::filesystem::path& dir);
    // In-memory dataset; images are N x 3 x R x R uint8.
    static Dataset from_memory(DatasetManifest manifest, torch::Tensor codes, torch::Tensor images_u8);

    const DatasetManifest& manifest() const { return manifest_; }
    const FactorSpec& spec() const { return manifest_.spec; }
    std::int64_t size() const { return manifest_.count; }
    int resolution() const { return manifest_.resolution; }

    // N x K, float64, manifest row order.
    const torch::Tensor& codes() const { return codes_; }

    // 3 x R x R in [-1,1].
    torch::Tensor image(std::int64_t index) const;
    // B x 3 x R x R in [-1,1].
    torch::Tensor images(const std::vector<std::int64_t>& indices) const;

    // Decodes every image into memory (N x 3 x R x R uint8). Integrity errors
    // name the first undecodable index.
    void preload();
    bool preloaded() const { return cache_.defined(); }

    // Row holding `code`, assuming exhaustive row-major enumeration.
    std::int64_t index_of(const FactorCode& code) const;
    bool exhaustive() const { return exhaustive_; }

    // Returns a copy whose codes tensor is replaced (used for leakage tests).
    Dataset with_codes(torch::Tensor codes) const;

private:
    torch::Tensor load_u8(std::int64_t index) const;

    DatasetManifest manifest_;
    std::filesystem::path dir_;
    torch::Tensor codes_;
    torch::Tensor cache_;
    bool exhaustive_ = false;
};

}  // namespace disent
