#include <cmath>
#include <iostream>
#include <numeric>

#include "disent/error.hpp"
#include "disent/metrics.hpp"
#include "disent/synth_data.hpp"

namespace disent {

nlohmann::json OracleTrainConfig::to_json() const {
    return {{"f_0", f_0},   {"working_resolution", working_resolution}, {"epochs", epochs},     {"batch", batch},
            {"lr", lr},     {"holdout_fraction", holdout_fraction},
            {"seed", seed}, {"gate", gate}};
}

OracleTrainConfig OracleTrainConfig::from_json(const nlohmann::json& j) {
    OracleTrainConfig c;
    c.f_0 = j.value("f_0", c.f_0);
    c.working_resolution = j.value("working_resolution", c.working_resolution);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.seed = j.value("seed", c.seed);
    c.gate = j.value("gate", c.gate);
    return c;
}

OracleEncoder LearnedOracle::encoder() const {
    auto net_copy = net;
    const int image_res = image_resolution, work_res = network.resolution;
    EncoderFn fn = [net_copy, image_res, work_res](const torch::Tensor& images) mutable {
        if (images.size(-1) != image_res || images.size(-2) != image_res)
            throw InvalidArgument("oracle expects " + std::to_string(image_res) + "x" + std::to_string(image_res) +
                                  " images");
        torch::NoGradGuard no_grad;
        net_copy->eval();
        return net_copy->forward(image_res == work_res ? images : downsample(images, work_res)).code;
    };
    return OracleEncoder("learned", spec, std::move(fn), heldout_rms, gate);
}

void LearnedOracle::save(const std::filesystem::path& path) const {
    nlohmann::json meta = {{"network", network.to_json()},
                           {"image_resolution", image_resolution},
                           {"factor_spec", spec.to_json()},
                           {"heldout_rms", heldout_rms},
                           {"loss_record", loss_record},
                           {"gate", gate}};
    try {
        torch::serialize::OutputArchive archive, weights;
        archive.write("meta", c10::IValue(meta.dump()));
        net->save(weights);
        archive.write("encoder", weights);
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        const auto tmp = path.string() + ".tmp";
        archive.save_to(tmp);
        std::filesystem::rename(tmp, path);
    } catch (const c10::Error& e) {
        throw CheckpointError(std::string("cannot write oracle: ") + e.what_without_backtrace());
    }
}

LearnedOracle LearnedOracle::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw CheckpointError("oracle not found: " + path.string());
    try {
        torch::serialize::InputArchive archive, weights;
        archive.load_from(path.string());
        c10::IValue v;
        archive.read("meta", v);
        const auto meta = nlohmann::json::parse(v.toStringRef());
        LearnedOracle o;
        o.network = NetworkConfig::from_json(meta.at("network"));
        o.spec = FactorSpec::from_json(meta.at("factor_spec"));
        o.image_resolution = meta.value("image_resolution", o.network.resolution);
        o.heldout_rms = meta.at("heldout_rms").get<std::vector<double>>();
        o.loss_record = meta.value("loss_record", std::vector<double>{});
        o.gate = meta.value("gate", OracleEncoder::kDefaultGate);
        o.net = DiscriminatorEncoder(o.network);
        archive.read("encoder", weights);
        o.net->load(weights);
        return o;
    } catch (const c10::Error& e) {
        throw CheckpointError("cannot read oracle " + path.string() + ": " + e.what_without_backtrace());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("cannot read oracle " + path.string() + ": " + e.what());
    }
}

LearnedOracle train_oracle_encoder(const Dataset& dataset, const OracleTrainConfig& config) {
    if (config.epochs <= 0 || config.batch <= 0 || !(config.lr > 0))
        throw InvalidArgument("oracle training needs positive epochs, batch and lr");
    if (!(config.holdout_fraction > 0 && config.holdout_fraction < 1))
        throw InvalidArgument("holdout_fraction must lie in (0,1)");

    LearnedOracle o;
    o.spec = dataset.spec();
    o.gate = config.gate;
    o.image_resolution = dataset.resolution();
    const int work_res = config.working_resolution > 0 ? config.working_resolution : dataset.resolution();
    if (work_res > dataset.resolution() || dataset.resolution() % work_res != 0)
        throw InvalidArgument("oracle working resolution must divide the dataset resolution");
    o.network = NetworkConfig::small_preset(work_res, dataset.spec().size());
    o.network.f_0 = config.f_0;
    o.network.validate();
    torch::manual_seed(config.seed);
    o.net = DiscriminatorEncoder(o.network);

    const auto n = dataset.size();
    Rng rng(config.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
    const auto n_hold = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(config.holdout_fraction * n)));
    std::vector<std::int64_t> hold(order.begin(), order.begin() + n_hold);
    std::vector<std::int64_t> train(order.begin() + n_hold, order.end());

    const auto codes = dataset.codes().to(torch::kFloat32);
    auto prepare = [&](const torch::Tensor& x) { return work_res == o.image_resolution ? x : downsample(x, work_res); };
    auto params = o.net->trunk_parameters();
    for (auto& p : o.net->code_head_parameters()) params.push_back(p);
    torch::optim::Adam opt(params, torch::optim::AdamOptions(config.lr).betas({0.9, 0.99}));

    const auto steps_per_epoch = (static_cast<std::int64_t>(train.size()) + config.batch - 1) / config.batch;
    const auto total_steps = steps_per_epoch * config.epochs;
    std::int64_t step = 0;
    o.net->train();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = train.size(); i > 1; --i)
            std::swap(train[i - 1], train[rng.uniform_int(i)]);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < train.size(); b += static_cast<std::size_t>(config.batch)) {
            const auto end = std::min(train.size(), b + static_cast<std::size_t>(config.batch));
            std::vector<std::int64_t> idx(train.begin() + static_cast<std::ptrdiff_t>(b),
                                          train.begin() + static_cast<std::ptrdiff_t>(end));
            auto x = prepare(dataset.images(idx));
            auto c = codes.index({torch::tensor(idx)});
            // Cosine decay to zero over the run.
            const double lr = 0.5 * config.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
            for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
            opt.zero_grad();
            // Squared error per dimension matches the held-out RMS criterion.
            auto loss = torch::mse_loss(o.net->forward(x).code, c);
            loss.backward();
            opt.step();
            epoch_loss += loss.item<double>() * static_cast<double>(idx.size());
            ++step;
        }
        o.loss_record.push_back(epoch_loss / static_cast<double>(train.size()));
        if (config.verbose)
            std::cerr << "oracle epoch " << epoch + 1 << "/" << config.epochs << " loss " << o.loss_record.back()
                      << "\n";
    }

    o.net->eval();
    auto preds = predict_batched([&](const torch::Tensor& x) { return o.net->forward(prepare(x)).code; },
                                 dataset.images(hold), 256);
    auto err = preds - dataset.codes().index({torch::tensor(hold)});
    auto rms = err.pow(2).mean(0).sqrt();
    o.heldout_rms.assign(rms.data_ptr<double>(), rms.data_ptr<double>() + rms.numel());
    return o;
}

OracleEncoder analytic_oracle(int resolution, std::int64_t probe, std::uint64_t seed) {
    const SceneSpec scene(resolution);
    EncoderFn fn = [scene](const torch::Tensor& images) { return analytic_encode_batch(images, scene); };
    Rng rng(seed);
    auto codes = sample_codes(scene.factors(), probe, rng);
    auto preds = fn(render_batch(codes, scene));
    auto rms = (preds - codes).pow(2).mean(0).sqrt().contiguous();
    std::vector<double> r(rms.data_ptr<double>(), rms.data_ptr<double>() + rms.numel());
    return OracleEncoder("analytic", scene.factors(), std::move(fn), std::move(r));
}

}  // namespace disent
