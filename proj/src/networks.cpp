#include "disent/networks.hpp"

#include <cmath>
#include <numbers>

#include "disent/error.hpp"

namespace disent {

namespace F = torch::nn::functional;

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2i(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

}  // namespace

int NetworkConfig::channels(int res) const {
    int c = f_0;
    for (int r = 64; r <= res; r *= 2) c /= 2;
    return std::max(c, 1);
}

int NetworkConfig::num_blocks() const { return log2i(resolution) - 1; }

int NetworkConfig::conditioning_dim() const {
    return is_fine() ? static_cast<int>(fine_factors.size()) : code_dim;
}

int NetworkConfig::mapping_input_dim() const {
    return is_fine() ? conditioning_dim() : z_dim + code_dim;
}

void NetworkConfig::validate() const {
    if (!is_power_of_two(resolution) || resolution < 8)
        throw InvalidArgument("resolution must be a power of two >= 8");
    if (n_mp < 1) throw InvalidArgument("n_mp must be >= 1");
    if (f_mp < 1 || f_0 < 1) throw InvalidArgument("f_mp and f_0 must be positive");
    if (code_dim < 1) throw InvalidArgument("code_dim must be >= 1");
    if (z_dim < 0) throw InvalidArgument("z_dim must be nonnegative");
    if (!is_fine() && z_dim < 1) throw InvalidArgument("z_dim must be >= 1 for the regular generator");
    if (is_fine()) {
        const int phi = *fine_cutoff;
        if (!is_power_of_two(phi) || phi < 4 || phi >= resolution)
            throw InvalidArgument("fine cutoff phi must be a power of two with 4 <= phi < R");
        if (fine_factors.empty()) throw InvalidArgument("the fine variant needs at least one fine factor");
        for (int k : fine_factors)
            if (k < 0 || k >= code_dim) throw InvalidArgument("fine factor index out of range");
    }
}

nlohmann::json NetworkConfig::to_json() const {
    nlohmann::json j = {{"n_mp", n_mp},           {"f_mp", f_mp},       {"f_0", f_0},
                        {"resolution", resolution}, {"z_dim", z_dim},     {"code_dim", code_dim},
                        {"fine_cutoff", nullptr},   {"fine_factors", fine_factors}};
    if (fine_cutoff) j["fine_cutoff"] = *fine_cutoff;
    return j;
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.n_mp = j.value("n_mp", c.n_mp);
    c.f_mp = j.value("f_mp", c.f_mp);
    c.f_0 = j.value("f_0", c.f_0);
    c.resolution = j.value("resolution", c.resolution);
    c.z_dim = j.value("z_dim", c.z_dim);
    c.code_dim = j.value("code_dim", c.code_dim);
    if (j.contains("fine_cutoff") && !j["fine_cutoff"].is_null()) c.fine_cutoff = j["fine_cutoff"].get<int>();
    if (j.contains("fine_factors")) c.fine_factors = j["fine_factors"].get<std::vector<int>>();
    return c;
}

NetworkConfig NetworkConfig::full_preset(int resolution, int code_dim) {
    NetworkConfig c;
    c.n_mp = 8;
    c.f_mp = 512;
    c.f_0 = 512;
    c.resolution = resolution;
    c.code_dim = code_dim;
    return c;
}

NetworkConfig NetworkConfig::small_preset(int resolution, int code_dim) {
    NetworkConfig c;
    c.n_mp = 3;
    c.f_mp = 64;
    c.f_0 = 64;
    c.resolution = resolution;
    c.code_dim = code_dim;
    return c;
}

// --- layers --------------------------------------------------------------

EqualLinearImpl::EqualLinearImpl(int in, int out, double bias_init, double lr_mul)
    : scale_(lr_mul / std::sqrt(static_cast<double>(in))), lr_mul_(lr_mul) {
    weight = register_parameter("weight", torch::randn({out, in}).div_(lr_mul));
    bias = register_parameter("bias", torch::full({out}, bias_init / lr_mul));
}

torch::Tensor EqualLinearImpl::forward(const torch::Tensor& x) {
    return F::linear(x, weight * scale_, bias * lr_mul_);
}

EqualConv2dImpl::EqualConv2dImpl(int in, int out, int kernel)
    : scale_(1.0 / std::sqrt(static_cast<double>(in * kernel * kernel))), padding_(kernel / 2) {
    weight = register_parameter("weight", torch::randn({out, in, kernel, kernel}));
    bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqualConv2dImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, weight * scale_, F::Conv2dFuncOptions().bias(bias).padding(padding_));
}

torch::Tensor activate(const torch::Tensor& x) {
    return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)) * std::numbers::sqrt2;
}

torch::Tensor adain(const torch::Tensor& features, const torch::Tensor& scale, const torch::Tensor& bias, double eps) {
    const bool batched = features.dim() == 4;
    if (!batched && features.dim() != 3) throw InvalidArgument("adain expects C x H x W or B x C x H x W features");
    auto x = batched ? features : features.unsqueeze(0);
    auto s = scale.dim() == 1 ? scale.unsqueeze(0) : scale;
    auto b = bias.dim() == 1 ? bias.unsqueeze(0) : bias;
    if (s.size(-1) != x.size(1) || b.size(-1) != x.size(1))
        throw InvalidArgument("adain: style width does not match the channel count");

    auto mean = x.mean({2, 3}, /*keepdim=*/true);
    auto centered = x - mean;
    // The eps^2 inside the root keeps zero-variance channels finite in both
    // directions: they map to exactly `bias`.
    auto stddev = (centered.pow(2).mean({2, 3}, true) + eps * eps).sqrt();
    auto out = s.unsqueeze(-1).unsqueeze(-1) * (centered / stddev) + b.unsqueeze(-1).unsqueeze(-1);
    return batched ? out : out.squeeze(0);
}

// --- mapping / synthesis -------------------------------------------------

MappingNetworkImpl::MappingNetworkImpl(int z_dim, int code_dim, int depth, int width)
    : z_dim_(z_dim), code_dim_(code_dim) {
    int in = z_dim + code_dim;
    for (int i = 0; i < depth; ++i) {
        layers_.push_back(register_module("fc" + std::to_string(i), EqualLinear(in, width)));
        in = width;
    }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z, const torch::Tensor& code) {
    if (code.dim() != 2 || code.size(1) != code_dim_)
        throw InvalidArgument("mapping network expects a B x " + std::to_string(code_dim_) + " code");
    torch::Tensor x;
    if (z_dim_ > 0) {
        if (!z.defined() || z.dim() != 2 || z.size(1) != z_dim_ || z.size(0) != code.size(0))
            throw InvalidArgument("mapping network expects a B x " + std::to_string(z_dim_) + " latent");
        auto zn = z * torch::rsqrt(z.pow(2).mean(1, true) + 1e-8);
        x = torch::cat({zn, code.to(z.dtype())}, 1);
    } else {
        x = code;
    }
    for (auto& layer : layers_) x = activate(layer->forward(x));
    return x;
}

SynthesisBlockImpl::SynthesisBlockImpl(int in_ch, int out_ch, int style_dim, bool upsample, int resolution)
    : upsample_(upsample), resolution_(resolution), out_ch_(out_ch) {
    conv1_ = register_module("conv1", EqualConv2d(in_ch, out_ch, 3));
    conv2_ = register_module("conv2", EqualConv2d(out_ch, out_ch, 3));
    rgb_ = register_module("to_rgb", EqualConv2d(out_ch, 3, 1));
    style1_ = register_module("style1", EqualLinear(style_dim, 2 * out_ch));
    style2_ = register_module("style2", EqualLinear(style_dim, 2 * out_ch));
    torch::NoGradGuard guard;
    style1_->bias.narrow(0, 0, out_ch).fill_(1.0);
    style2_->bias.narrow(0, 0, out_ch).fill_(1.0);
}

std::vector<std::pair<torch::Tensor, torch::Tensor>> SynthesisBlockImpl::styles(const torch::Tensor& w) {
    auto s1 = style1_->forward(w);
    auto s2 = style2_->forward(w);
    return {{s1.narrow(1, 0, out_ch_), s1.narrow(1, out_ch_, out_ch_)},
            {s2.narrow(1, 0, out_ch_), s2.narrow(1, out_ch_, out_ch_)}};
}

torch::Tensor SynthesisBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& w) {
    auto st = styles(w);
    auto h = upsample_ ? upsample(x, 2) : x;
    h = adain(activate(conv1_->forward(h)), st[0].first, st[0].second);
    h = adain(activate(conv2_->forward(h)), st[1].first, st[1].second);
    return h;
}

torch::Tensor SynthesisBlockImpl::to_rgb(const torch::Tensor& x) { return rgb_->forward(x); }

GeneratorImpl::GeneratorImpl(const NetworkConfig& config) : config_(config) {
    config_.validate();
    const int R = config_.resolution;
    const int z_dim = config_.is_fine() ? 0 : config_.z_dim;
    mapping = register_module("mapping", MappingNetwork(z_dim, config_.conditioning_dim(), config_.n_mp, config_.f_mp));

    int start = 4;
    if (config_.is_fine()) {
        const int phi = *config_.fine_cutoff;
        input_rgb_ = register_module("input_rgb", EqualConv2d(3, config_.channels(phi), 1));
        input_conv_ = register_module("input_conv", EqualConv2d(config_.channels(phi), config_.channels(phi), 3));
        start = 2 * phi;
    } else {
        const_input_ = register_parameter("const", torch::randn({1, config_.channels(4), 4, 4}));
        blocks_.push_back(register_module(
            "block4", SynthesisBlock(config_.channels(4), config_.channels(4), config_.f_mp, false, 4)));
        start = 8;
    }
    for (int res = start; res <= R; res *= 2) {
        blocks_.push_back(register_module(
            "block" + std::to_string(res),
            SynthesisBlock(config_.channels(res / 2), config_.channels(res), config_.f_mp, true, res)));
    }
}

std::vector<int> GeneratorImpl::modulated_resolutions() const {
    std::vector<int> out;
    for (const auto& b : blocks_) out.push_back(b->resolution());
    return out;
}

StyleVector GeneratorImpl::map_styles(const torch::Tensor& z, const torch::Tensor& code) {
    StyleVector sv;
    sv.w = mapping->forward(z, code);
    for (auto& b : blocks_)
        for (auto& site : b->styles(sv.w)) sv.sites.push_back(site);
    return sv;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& content, const torch::Tensor& code, int active_res,
                                     double alpha) {
    const int R = config_.resolution;
    if (active_res == 0) active_res = R;

    if (config_.is_fine()) {
        const int phi = *config_.fine_cutoff;
        if (active_res != R) throw InvalidArgument("the fine generator does not support progressive growing");
        if (content.dim() != 4 || content.size(1) != 3 || content.size(2) != phi || content.size(3) != phi)
            throw InvalidArgument("fine generator expects B x 3 x phi x phi input images");
        auto w = mapping->forward({}, code.to(content.dtype()));
        auto x = activate(input_conv_->forward(activate(input_rgb_->forward(content))));
        for (auto& b : blocks_) x = b->forward(x, w);
        return torch::tanh(blocks_.back()->to_rgb(x));
    }

    if (active_res < 4 || active_res > R || (active_res & (active_res - 1)) != 0)
        throw InvalidArgument("active resolution must be a power of two in [4, R]");
    auto w = mapping->forward(content, code.to(content.dtype()));
    auto x = const_input_.expand({content.size(0), -1, -1, -1});
    torch::Tensor prev;
    std::size_t last = 0;
    for (std::size_t i = 0; i < blocks_.size() && blocks_[i]->resolution() <= active_res; ++i) {
        prev = x;
        x = blocks_[i]->forward(x, w);
        last = i;
    }
    auto rgb = blocks_[last]->to_rgb(x);
    if (alpha < 1.0 && last > 0) {
        auto skip = upsample(blocks_[last - 1]->to_rgb(prev), 2);
        rgb = torch::lerp(skip, rgb, alpha);
    }
    return torch::tanh(rgb);
}

// --- discriminator / encoder ----------------------------------------------

DiscriminatorEncoderImpl::DiscriminatorEncoderImpl(const NetworkConfig& config) : config_(config) {
    config_.validate();
    for (int res = config_.resolution; res >= 8; res /= 2) {
        Stage s;
        s.resolution = res;
        const std::string tag = std::to_string(res);
        s.from_rgb = register_module("from_rgb" + tag, EqualConv2d(3, config_.channels(res), 1));
        s.conv1 = register_module("conv" + tag + "a", EqualConv2d(config_.channels(res), config_.channels(res), 3));
        s.conv2 = register_module("conv" + tag + "b", EqualConv2d(config_.channels(res), config_.channels(res / 2), 3));
        stages_.push_back(s);
    }
    const int c4 = config_.channels(4);
    from_rgb4_ = register_module("from_rgb4", EqualConv2d(3, c4, 1));
    conv4_ = register_module("conv4", EqualConv2d(c4, c4, 3));
    dense_ = register_module("dense", EqualLinear(16 * c4, 64));
    realness_head_ = register_module("realness_head", EqualLinear(64, 1));
    if (config_.is_fine()) {
        const int cphi = config_.channels(*config_.fine_cutoff);
        fine_conv_ = register_module("fine_conv", EqualConv2d(cphi, cphi, 3));
        code_head_ = register_module("code_head", EqualLinear(cphi, config_.conditioning_dim()));
    } else {
        code_head_ = register_module("code_head", EqualLinear(64, config_.conditioning_dim()));
    }
}

torch::Tensor DiscriminatorEncoderImpl::run_trunk(const torch::Tensor& images, int active_res, double alpha,
                                                  torch::Tensor* fine_features) {
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != active_res || images.size(3) != active_res)
        throw InvalidArgument("discriminator expects B x 3 x " + std::to_string(active_res) + " x " +
                              std::to_string(active_res) + " images");
    torch::Tensor h;
    bool started = false;
    for (auto& s : stages_) {
        if (s.resolution > active_res) continue;
        if (!started) {
            h = activate(s.from_rgb->forward(images));
            started = true;
        }
        if (fine_features && config_.is_fine() && s.resolution == *config_.fine_cutoff) *fine_features = h;
        h = activate(s.conv1->forward(h));
        h = activate(s.conv2->forward(h));
        h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
        if (s.resolution == active_res && alpha < 1.0) {
            const int half = active_res / 2;
            auto small = downsample(images, half);
            torch::Tensor skip;
            if (half >= 8) {
                for (auto& t : stages_)
                    if (t.resolution == half) skip = activate(t.from_rgb->forward(small));
            } else {
                skip = activate(from_rgb4_->forward(small));
            }
            h = torch::lerp(skip, h, alpha);
        }
    }
    if (!started) h = activate(from_rgb4_->forward(images));
    if (fine_features && config_.is_fine() && *config_.fine_cutoff == 4) *fine_features = h;
    h = activate(conv4_->forward(h));
    return activate(dense_->forward(h.flatten(1)));
}

DEOutput DiscriminatorEncoderImpl::forward(const torch::Tensor& images, int active_res, double alpha) {
    if (active_res == 0) active_res = config_.resolution;
    if (config_.is_fine() && active_res != config_.resolution)
        throw InvalidArgument("the fine discriminator does not support progressive growing");
    torch::Tensor fine_features;
    auto features = run_trunk(images, active_res, alpha, config_.is_fine() ? &fine_features : nullptr);
    DEOutput out;
    out.realness = realness_head_->forward(features).squeeze(1);
    if (config_.is_fine()) {
        auto h = activate(fine_conv_->forward(fine_features));
        out.code = code_head_->forward(h.mean({2, 3}));
    } else {
        out.code = code_head_->forward(features);
    }
    return out;
}

torch::Tensor DiscriminatorEncoderImpl::code_head_input(const torch::Tensor& images) {
    torch::Tensor fine_features;
    auto features = run_trunk(images, config_.resolution, 1.0, config_.is_fine() ? &fine_features : nullptr);
    return config_.is_fine() ? fine_features : features;
}

std::vector<torch::Tensor> DiscriminatorEncoderImpl::realness_head_parameters() const {
    return realness_head_->parameters();
}

std::vector<torch::Tensor> DiscriminatorEncoderImpl::code_head_parameters() const {
    auto p = code_head_->parameters();
    if (fine_conv_) {
        auto f = fine_conv_->parameters();
        p.insert(p.end(), f.begin(), f.end());
    }
    return p;
}

std::vector<torch::Tensor> DiscriminatorEncoderImpl::trunk_parameters() const {
    std::vector<torch::Tensor> out;
    auto heads = realness_head_parameters();
    auto code = code_head_parameters();
    heads.insert(heads.end(), code.begin(), code.end());
    for (const auto& p : parameters()) {
        bool is_head = false;
        for (const auto& h : heads) is_head = is_head || h.is_same(p);
        if (!is_head) out.push_back(p);
    }
    return out;
}

// --- fine variant ----------------------------------------------------------

Generator build_fine_generator(const NetworkConfig& config) {
    if (!config.fine_cutoff) throw InvalidArgument("build_fine_generator needs a fine cutoff phi");
    if (*config.fine_cutoff >= config.resolution) throw InvalidArgument("fine cutoff phi must be below R");
    return Generator(config);
}

torch::Tensor downsample(const torch::Tensor& images, int size) {
    const bool batched = images.dim() == 4;
    auto x = batched ? images : images.unsqueeze(0);
    const auto res = x.size(-1);
    if (size <= 0 || res % size != 0) throw InvalidArgument("downsample: target size must divide the resolution");
    if (size == res) return images;
    const auto k = res / size;
    auto out = F::avg_pool2d(x, F::AvgPool2dFuncOptions(k));
    return batched ? out : out.squeeze(0);
}

torch::Tensor upsample(const torch::Tensor& images, int factor) {
    return images.repeat_interleave(factor, -1).repeat_interleave(factor, -2);
}

torch::Tensor fine_generate(Generator& generator, const torch::Tensor& image, const torch::Tensor& fine_code) {
    const auto& cfg = generator->config();
    if (!cfg.is_fine()) throw InvalidArgument("fine_generate requires a fine generator");
    const bool batched = image.dim() == 4;
    auto x = batched ? image : image.unsqueeze(0);
    if (x.size(1) != 3 || x.size(2) != cfg.resolution || x.size(3) != cfg.resolution)
        throw InvalidArgument("fine_generate: image must be 3 x R x R");
    auto c = fine_code.dim() == 1 ? fine_code.unsqueeze(0) : fine_code;
    if (c.size(1) != cfg.conditioning_dim())
        throw InvalidArgument("fine_generate: fine code has the wrong length");
    auto out = generator->forward(downsample(x, *cfg.fine_cutoff), c.to(x.dtype()));
    return batched ? out : out.squeeze(0);
}

}  // namespace disent
