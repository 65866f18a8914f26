#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "disent/checkpoint.hpp"

namespace disent {

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

// HTTP surface over one immutable model snapshot. Handlers are plain
// functions of (method, path, body) so they can be exercised without a
// socket; serve() mounts the same handlers on an HTTP server.
//
//   GET  /model/info
//   POST /generate  {code, z_seed?}          -> {image}
//   POST /encode    {image}                  -> {code}
//   POST /edit      {image, fine_code}       -> {image}      fine models only
//   POST /traverse  {anchor, factor, steps}  -> {images}     anchor first
//
// Every response carries "checkpoint_digest".
class ModelService {
public:
    explicit ModelService(const std::filesystem::path& checkpoint, std::string name = "");
    ~ModelService();

    ApiResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    // Atomically replaces the snapshot; in-flight requests finish on the old one.
    void swap(const std::filesystem::path& checkpoint);
    std::string digest() const;

    // Binds (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Snapshot;
    std::shared_ptr<const Snapshot> snapshot() const;

    std::string name_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Snapshot> current_;
    struct Server;
    std::unique_ptr<Server> server_;
};

}  // namespace disent
