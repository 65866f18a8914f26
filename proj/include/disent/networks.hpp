#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace disent {

// Sizing knobs of the style-based generator and the shared
// discriminator/encoder.
struct NetworkConfig {
    int n_mp = 3;           // mapping-network depth
    int f_mp = 64;          // mapping width (= style vector width)
    int f_0 = 64;           // feature maps at resolutions <= 32
    int resolution = 64;    // output side length R
    int z_dim = 128;        // latent width; the fine generator ignores it
    int code_dim = 7;       // K
    std::optional<int> fine_cutoff;  // phi
    std::vector<int> fine_factors;   // factor indices modulated by the fine generator

    // Feature maps at a given resolution: f_0 up to 32x32, halved per doubling above.
    int channels(int res) const;
    // Synthesis blocks 4x4 .. RxR.
    int num_blocks() const;
    bool is_fine() const { return fine_cutoff.has_value(); }
    // Width of the code the generator conditions on and the encoder predicts.
    int conditioning_dim() const;
    // Width of the mapping-network input.
    int mapping_input_dim() const;

    // Throws InvalidArgument when any invariant is violated.
    void validate() const;

    nlohmann::json to_json() const;
    static NetworkConfig from_json(const nlohmann::json& j);

    // n_mp = 8, f_mp = 512, f_0 = 512.
    static NetworkConfig full_preset(int resolution, int code_dim);
    // n_mp = 3, f_mp = 64, f_0 = 64.
    static NetworkConfig small_preset(int resolution, int code_dim);

    bool operator==(const NetworkConfig&) const = default;
};

// Linear layer with runtime weight scaling (equalized learning rate).
class EqualLinearImpl : public torch::nn::Module {
public:
    EqualLinearImpl(int in, int out, double bias_init = 0.0, double lr_mul = 1.0);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight, bias;

private:
    double scale_;
    double lr_mul_;
};
TORCH_MODULE(EqualLinear);

class EqualConv2dImpl : public torch::nn::Module {
public:
    EqualConv2dImpl(int in, int out, int kernel);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight, bias;

private:
    double scale_;
    int padding_;
};
TORCH_MODULE(EqualConv2d);

// Leaky ReLU (0.2) with sqrt(2) gain.
torch::Tensor activate(const torch::Tensor& x);

// Per-channel instance renormalisation to a style-supplied scale and bias.
// features: B x C x H x W (or C x H x W); scale/bias: B x C (or C).
torch::Tensor adain(const torch::Tensor& features, const torch::Tensor& scale, const torch::Tensor& bias,
                    double eps = 1e-8);

// Output of the mapping network plus the per-site AdaIN parameters it induces.
struct StyleVector {
    torch::Tensor w;                                            // B x f_mp
    std::vector<std::pair<torch::Tensor, torch::Tensor>> sites;  // (scale, bias), each B x C
};

class MappingNetworkImpl : public torch::nn::Module {
public:
    MappingNetworkImpl(int z_dim, int code_dim, int depth, int width);
    // z may be undefined when z_dim == 0.
    torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& code);

    int input_dim() const { return z_dim_ + code_dim_; }

private:
    int z_dim_, code_dim_;
    std::vector<EqualLinear> layers_;
};
TORCH_MODULE(MappingNetwork);

// Two 3x3 convolutions, each followed by activation and AdaIN.
class SynthesisBlockImpl : public torch::nn::Module {
public:
    SynthesisBlockImpl(int in_ch, int out_ch, int style_dim, bool upsample, int resolution);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);
    torch::Tensor to_rgb(const torch::Tensor& x);
    // (scale, bias) for both AdaIN sites of this block.
    std::vector<std::pair<torch::Tensor, torch::Tensor>> styles(const torch::Tensor& w);

    int resolution() const { return resolution_; }

private:
    bool upsample_;
    int resolution_;
    int out_ch_;
    EqualConv2d conv1_{nullptr}, conv2_{nullptr}, rgb_{nullptr};
    EqualLinear style1_{nullptr}, style2_{nullptr};
};
TORCH_MODULE(SynthesisBlock);

// Style-based generator. The regular variant starts from a learned 4x4
// constant; the fine variant starts from a phi x phi image through an
// unmodulated input block and only modulates blocks above phi.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const NetworkConfig& config);

    // content: B x z_dim latents (regular) or B x 3 x phi x phi images (fine).
    // Returns B x 3 x r x r in [-1,1] for the active resolution r; alpha is
    // the fade-in weight of the newest block.
    torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& code, int active_res = 0,
                          double alpha = 1.0);

    StyleVector map_styles(const torch::Tensor& z, const torch::Tensor& code);

    // Resolutions whose blocks receive style modulation, ascending.
    std::vector<int> modulated_resolutions() const;
    const NetworkConfig& config() const { return config_; }

    MappingNetwork mapping{nullptr};

private:
    NetworkConfig config_;
    torch::Tensor const_input_;
    EqualConv2d input_rgb_{nullptr}, input_conv_{nullptr};
    std::vector<SynthesisBlock> blocks_;
};
TORCH_MODULE(Generator);

struct DEOutput {
    torch::Tensor realness;  // B
    torch::Tensor code;      // B x K (or B x K_fine)
};

// Shared discriminator / encoder. Every layer is shared except the two heads.
class DiscriminatorEncoderImpl : public torch::nn::Module {
public:
    explicit DiscriminatorEncoderImpl(const NetworkConfig& config);

    DEOutput forward(const torch::Tensor& images, int active_res = 0, double alpha = 1.0);

    // Trunk features entering the code head: the 64-wide dense features for
    // the regular variant, the phi x phi feature map for the fine variant.
    torch::Tensor code_head_input(const torch::Tensor& images);

    std::vector<torch::Tensor> trunk_parameters() const;
    std::vector<torch::Tensor> realness_head_parameters() const;
    std::vector<torch::Tensor> code_head_parameters() const;
    const NetworkConfig& config() const { return config_; }

private:
    struct Stage {
        int resolution;
        EqualConv2d from_rgb{nullptr}, conv1{nullptr}, conv2{nullptr};
    };
    torch::Tensor run_trunk(const torch::Tensor& images, int active_res, double alpha, torch::Tensor* fine_features);

    NetworkConfig config_;
    std::vector<Stage> stages_;  // R down to 8
    EqualConv2d from_rgb4_{nullptr}, conv4_{nullptr};
    EqualLinear dense_{nullptr};
    EqualLinear realness_head_{nullptr};
    EqualLinear code_head_{nullptr};
    EqualConv2d fine_conv_{nullptr};
};
TORCH_MODULE(DiscriminatorEncoder);

// Builds a fine generator; the config must carry 4 <= phi < R.
Generator build_fine_generator(const NetworkConfig& config);

// Area-average downsampling of B x 3 x R x R (or 3 x R x R) to side `size`.
torch::Tensor downsample(const torch::Tensor& images, int size);
// Nearest-neighbour upsampling by an integer factor.
torch::Tensor upsample(const torch::Tensor& images, int factor);

// Downsamples the image to phi and runs the fine generator. Accepts a single
// 3 x R x R image or a batch.
torch::Tensor fine_generate(Generator& generator, const torch::Tensor& image, const torch::Tensor& fine_code);

}  // namespace disent
