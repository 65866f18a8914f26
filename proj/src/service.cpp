#include "disent/service.hpp"

#include <cmath>
#include <optional>

#include <httplib.h>

#include "disent/error.hpp"
#include "disent/image_io.hpp"
#include "disent/rng.hpp"
#include "disent/traversal.hpp"

namespace disent {

struct ModelService::Snapshot {
    mutable ModelBundle bundle;
    std::string digest;
    std::string name;
};

struct ModelService::Server {
    httplib::Server http;
};

namespace {

using nlohmann::json;

// Request validation failure carrying the HTTP status and the offending field.
struct ApiError {
    int status;
    std::string kind;
    std::string field;
    std::string message;
};

[[noreturn]] void fail(int status, std::string kind, std::string field, std::string message) {
    throw ApiError{status, std::move(kind), std::move(field), std::move(message)};
}

std::vector<double> read_code(const json& body, const std::string& field, int expected) {
    if (!body.contains(field)) fail(422, "invalid-argument", field, "missing field '" + field + "'");
    const auto& v = body.at(field);
    if (!v.is_array()) fail(422, "invalid-argument", field, "'" + field + "' must be an array of numbers");
    if (static_cast<int>(v.size()) != expected)
        fail(422, "invalid-argument", field,
             "'" + field + "' must have length " + std::to_string(expected) + ", got " + std::to_string(v.size()));
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) fail(422, "invalid-argument", field, "'" + field + "' must contain only numbers");
        const double x = e.get<double>();
        if (!std::isfinite(x) || x < 0.0 || x > 1.0)
            fail(422, "invalid-argument", field, "'" + field + "' entries must lie in [0,1]");
        out.push_back(x);
    }
    return out;
}

std::int64_t read_int(const json& body, const std::string& field, std::optional<std::int64_t> fallback,
                      std::int64_t lo, std::int64_t hi) {
    if (!body.contains(field)) {
        if (fallback) return *fallback;
        fail(422, "invalid-argument", field, "missing field '" + field + "'");
    }
    const auto& v = body.at(field);
    if (!v.is_number_integer()) fail(422, "invalid-argument", field, "'" + field + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi)
        fail(422, "invalid-argument", field,
             "'" + field + "' must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
}

torch::Tensor read_image(const json& body, const std::string& field, int resolution) {
    if (!body.contains(field) || !body.at(field).is_string())
        fail(422, "invalid-argument", field, "'" + field + "' must be a base64 PNG string");
    RgbImage img;
    try {
        img = decode_png(base64_decode(body.at(field).get<std::string>()));
    } catch (const std::exception& e) {
        fail(415, "unsupported-media", field, std::string("'") + field + "' is not a decodable PNG: " + e.what());
    }
    if (img.width != resolution || img.height != resolution)
        fail(422, "invalid-argument", field,
             "'" + field + "' must be " + std::to_string(resolution) + "x" + std::to_string(resolution));
    return to_tensor(img);
}

std::string png64(const torch::Tensor& chw) { return base64_encode(encode_png(from_tensor(chw))); }

}  // namespace

ModelService::ModelService(const std::filesystem::path& checkpoint, std::string name) : name_(std::move(name)) {
    swap(checkpoint);
}

ModelService::~ModelService() = default;

void ModelService::swap(const std::filesystem::path& checkpoint) {
    auto snap = std::make_shared<Snapshot>();
    snap->bundle = load_checkpoint(checkpoint);
    snap->bundle.generator->eval();
    snap->bundle.de->eval();
    for (auto& p : snap->bundle.generator->parameters()) p.requires_grad_(false);
    for (auto& p : snap->bundle.de->parameters()) p.requires_grad_(false);
    snap->digest = checkpoint_digest(checkpoint);
    snap->name = name_.empty() ? checkpoint.stem().string() : name_;
    std::lock_guard lock(mutex_);
    current_ = std::move(snap);
}

std::shared_ptr<const ModelService::Snapshot> ModelService::snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
}

std::string ModelService::digest() const { return snapshot()->digest; }

ApiResponse ModelService::handle(const std::string& method, const std::string& path, const std::string& body) const {
    auto snap = snapshot();
    auto& b = snap->bundle;
    const auto& cfg = b.config;
    ApiResponse res;
    torch::NoGradGuard no_grad;
    try {
        auto need = [&](const char* m) {
            if (method != m) fail(405, "method-not-allowed", "", path + " expects " + m);
        };
        json req = json::object();
        if (method == "POST") {
            try {
                req = json::parse(body.empty() ? std::string("{}") : body);
            } catch (const json::parse_error& e) {
                fail(400, "bad-request", "", std::string("request body is not valid JSON: ") + e.what());
            }
            if (!req.is_object()) fail(400, "bad-request", "", "request body must be a JSON object");
        }

        if (path == "/model/info") {
            need("GET");
            res.body = {{"name", snap->name},
                        {"factor_spec", b.spec.to_json()},
                        {"resolution", cfg.resolution},
                        {"fine_cutoff", cfg.fine_cutoff ? json(*cfg.fine_cutoff) : json(nullptr)},
                        {"fine_factors", cfg.fine_factors},
                        {"code_length", cfg.conditioning_dim()},
                        {"z_dim", cfg.is_fine() ? 0 : cfg.z_dim}};
        } else if (path == "/generate") {
            need("POST");
            if (cfg.is_fine()) fail(409, "conflict", "", "/generate needs a regular (non-fine) checkpoint");
            auto code = read_code(req, "code", cfg.code_dim);
            auto seed = read_int(req, "z_seed", 0, 0, std::numeric_limits<std::int64_t>::max());
            Rng rng(static_cast<std::uint64_t>(seed));
            auto z = rng.normal_tensor({1, cfg.z_dim});
            auto img = b.generator->forward(z, FactorCode(code).to_tensor().unsqueeze(0));
            res.body = {{"image", png64(img[0])}, {"z_seed", seed}};
        } else if (path == "/encode") {
            need("POST");
            auto x = read_image(req, "image", cfg.resolution);
            auto c = b.de->forward(x.unsqueeze(0)).code[0].to(torch::kFloat64).contiguous();
            res.body = {{"code", std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel())}};
        } else if (path == "/edit") {
            need("POST");
            if (!cfg.is_fine()) fail(409, "conflict", "", "/edit needs a fine checkpoint");
            auto x = read_image(req, "image", cfg.resolution);
            auto code = read_code(req, "fine_code", cfg.conditioning_dim());
            auto img = fine_generate(b.generator, x, FactorCode(code).to_tensor());
            res.body = {{"image", png64(img.dim() == 4 ? img[0] : img)}};
        } else if (path == "/traverse") {
            need("POST");
            if (!req.contains("anchor") || !req.at("anchor").is_object())
                fail(422, "invalid-argument", "anchor", "'anchor' must be an object with 'code' or 'image'");
            const auto& anchor = req.at("anchor");
            const auto factor = read_int(req, "factor", std::nullopt, 0, cfg.conditioning_dim() - 1);
            const auto steps = read_int(req, "steps", std::nullopt, 2, 64);
            if (cfg.is_fine() && !anchor.contains("image") && anchor.contains("code"))
                fail(409, "conflict", "anchor", "a fine checkpoint traverses from an image anchor");
            if (!cfg.is_fine() && !anchor.contains("code") && anchor.contains("image"))
                fail(409, "conflict", "anchor", "image anchors need a fine checkpoint");
            TraversalRow row;
            if (cfg.is_fine()) {
                auto x = read_image(anchor, "image", cfg.resolution);
                row = latent_traversal(b, x, static_cast<int>(factor), static_cast<int>(steps));
            } else {
                auto code = read_code(anchor, "code", cfg.code_dim);
                auto seed = read_int(req, "z_seed", 0, 0, std::numeric_limits<std::int64_t>::max());
                row = latent_traversal(b, FactorCode(code), static_cast<int>(factor), static_cast<int>(steps),
                                       static_cast<std::uint64_t>(seed));
            }
            json images = json::array({png64(row.anchor)});
            json codes = json::array();
            for (std::size_t i = 0; i < row.images.size(); ++i) {
                images.push_back(png64(row.images[i]));
                codes.push_back(row.codes[i].values());
            }
            res.body = {{"images", images}, {"codes", codes}, {"factor", factor}, {"steps", steps}};
        } else {
            fail(404, "not-found", "", "no endpoint " + path);
        }
    } catch (const ApiError& e) {
        res.status = e.status;
        res.body = {{"error", e.kind}, {"message", e.message}};
        if (!e.field.empty()) res.body["field"] = e.field;
    } catch (const Error& e) {
        res.status = e.kind() == "invalid-argument" ? 422 : 500;
        res.body = {{"error", e.kind()}, {"message", e.what()}};
    } catch (const std::exception& e) {
        res.status = 500;
        res.body = {{"error", "internal"}, {"message", e.what()}};
    }
    res.body["checkpoint_digest"] = snap->digest;
    return res;
}

int ModelService::bind(const std::string& host, int port) {
    server_ = std::make_unique<Server>();
    auto& http = server_->http;
    http.set_payload_max_length(32 * 1024 * 1024);
    auto route = [this](const httplib::Request& req, httplib::Response& out) {
        auto r = handle(req.method, req.path, req.body);
        out.status = r.status;
        out.set_content(r.body.dump(), "application/json");
    };
    for (const char* p : {"/model/info", "/generate", "/encode", "/edit", "/traverse"}) {
        http.Get(p, route);
        http.Post(p, route);
    }
    http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& out) { out.status = 204; });
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    if (port == 0) return http.bind_to_any_port(host);
    if (!http.bind_to_port(host, port)) throw InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void ModelService::listen() {
    if (!server_) throw InvalidArgument("bind() must be called before listen()");
    server_->http.listen_after_bind();
}

void ModelService::stop() {
    if (server_) server_->http.stop();
}

}  // namespace disent
