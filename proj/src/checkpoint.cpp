#include "disent/checkpoint.hpp"

#include "disent/error.hpp"
#include "disent/image_io.hpp"

namespace disent {

ModelBundle ModelBundle::create(const NetworkConfig& config, const FactorSpec& spec, std::uint64_t seed) {
    config.validate();
    if (config.code_dim != spec.size())
        throw InvalidArgument("network code_dim does not match the factor spec");
    ModelBundle b;
    b.config = config;
    b.spec = spec;
    torch::manual_seed(seed);
    b.generator = Generator(config);
    b.de = DiscriminatorEncoder(config);
    return b;
}

torch::Tensor ModelBundle::generate(const torch::Tensor& z, const torch::Tensor& code) {
    torch::NoGradGuard guard;
    return generator->forward(z, code);
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle, const OptimizerPair* optimizers) {
    nlohmann::json meta = {{"network", bundle.config.to_json()},
                           {"factor_spec", bundle.spec.to_json()},
                           {"step", bundle.step},
                           {"images_seen", bundle.images_seen},
                           {"rng_state", bundle.rng_state},
                           {"extra", bundle.extra},
                           {"has_optimizers", optimizers != nullptr}};
    try {
        torch::serialize::OutputArchive archive;
        archive.write("meta", c10::IValue(meta.dump()));
        torch::serialize::OutputArchive g, d;
        bundle.generator->save(g);
        bundle.de->save(d);
        archive.write("generator", g);
        archive.write("de", d);
        if (optimizers) {
            torch::serialize::OutputArchive og, od;
            optimizers->generator->save(og);
            optimizers->de->save(od);
            archive.write("generator_opt", og);
            archive.write("de_opt", od);
        }
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        const auto tmp = path.string() + ".tmp";
        archive.save_to(tmp);
        std::filesystem::rename(tmp, path);
    } catch (const c10::Error& e) {
        throw CheckpointError(std::string("cannot write checkpoint: ") + e.what_without_backtrace());
    }
}

namespace {

nlohmann::json read_meta(torch::serialize::InputArchive& archive) {
    c10::IValue v;
    archive.read("meta", v);
    return nlohmann::json::parse(v.toStringRef());
}

}  // namespace

ModelBundle load_checkpoint(const std::filesystem::path& path, const FactorSpec* expected_spec) {
    if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        const auto meta = read_meta(archive);

        ModelBundle b;
        b.config = NetworkConfig::from_json(meta.at("network"));
        b.spec = FactorSpec::from_json(meta.at("factor_spec"));
        if (expected_spec && !(*expected_spec == b.spec))
            throw CheckpointError("checkpoint factor spec does not match the expected factor spec");
        b.step = meta.at("step").get<std::int64_t>();
        b.images_seen = meta.value("images_seen", std::int64_t{0});
        b.rng_state = meta.at("rng_state").get<std::string>();
        b.extra = meta.value("extra", nlohmann::json::object());
        b.generator = Generator(b.config);
        b.de = DiscriminatorEncoder(b.config);
        torch::serialize::InputArchive g, d;
        archive.read("generator", g);
        archive.read("de", d);
        b.generator->load(g);
        b.de->load(d);
        return b;
    } catch (const CheckpointError&) {
        throw;
    } catch (const c10::Error& e) {
        throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    } catch (const std::exception& e) {
        throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what());
    }
}

bool load_optimizer_state(const std::filesystem::path& path, OptimizerPair& optimizers) {
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        if (!read_meta(archive).value("has_optimizers", false)) return false;
        torch::serialize::InputArchive og, od;
        archive.read("generator_opt", og);
        archive.read("de_opt", od);
        optimizers.generator->load(og);
        optimizers.de->load(od);
        return true;
    } catch (const c10::Error& e) {
        throw CheckpointError("cannot read optimizer state: " + std::string(e.what_without_backtrace()));
    }
}

std::string checkpoint_digest(const std::filesystem::path& path) { return sha256_file(path); }

}  // namespace disent
