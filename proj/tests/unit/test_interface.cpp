#include "../common/testing.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "disent/checkpoint.hpp"
#include "disent/error.hpp"
#include "disent/image_io.hpp"
#include "disent/service.hpp"
#include "disent/synth_data.hpp"
#include "../common/test_util.hpp"

using namespace disent;
using nlohmann::json;

namespace {

NetworkConfig regular_net() {
    NetworkConfig n;
    n.n_mp = 2;
    n.f_mp = 16;
    n.f_0 = 8;
    n.resolution = 32;
    n.z_dim = 8;
    n.code_dim = 7;
    return n;
}

NetworkConfig fine_net() {
    auto n = regular_net();
    n.z_dim = 0;
    n.fine_cutoff = 8;
    n.fine_factors = {2, 3, 6};
    return n;
}

struct Models {
    test::TempDir tmp;
    std::filesystem::path regular, fine, regular2;

    Models() {
        const auto spec = SceneSpec(32).factors();
        regular = tmp.path() / "regular.ckpt";
        fine = tmp.path() / "fine.ckpt";
        regular2 = tmp.path() / "regular2.ckpt";
        save_checkpoint(regular, ModelBundle::create(regular_net(), spec, 1));
        save_checkpoint(fine, ModelBundle::create(fine_net(), spec, 2));
        save_checkpoint(regular2, ModelBundle::create(regular_net(), spec, 3));
    }
};

const Models& models() {
    static const Models m;
    return m;
}

std::string png_of(const torch::Tensor& chw) { return base64_encode(encode_png(from_tensor(chw))); }

std::string scene_png(std::int64_t index) {
    SceneSpec scene(32);
    return png_of(render_scene(grid_code(scene.factors(), index), scene));
}

ApiResponse post(const ModelService& s, const std::string& path, const json& body) {
    return s.handle("POST", path, body.dump());
}

const json kCode = {0.0, 1.0 / 3, 1.0, 0.5, 0.25, 0.75, 1.0};

}  // namespace

TEST_CASE("base64 round trip with padding") {
    for (std::size_t n = 0; n < 8; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(37 * i + 11);
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK(base64_encode({'a', 'b'}) == "YWI=");
    CHECK_THROWS_AS(base64_decode("YWI"), InvalidArgument);
    CHECK_THROWS_AS(base64_decode("Y=I="), InvalidArgument);
    CHECK_THROWS_AS(base64_decode("%%%%"), InvalidArgument);
}

TEST_CASE("model info describes the checkpoint") {
    ModelService s(models().regular, "demo");
    auto r = s.handle("GET", "/model/info", "");
    CHECK(r.status == 200);
    CHECK(r.body["name"] == "demo");
    CHECK(r.body["resolution"] == 32);
    CHECK(r.body["fine_cutoff"].is_null());
    CHECK(r.body["code_length"] == 7);
    CHECK(r.body["factor_spec"]["factors"].size() == 7);
    CHECK(r.body["checkpoint_digest"] == checkpoint_digest(models().regular));

    ModelService f(models().fine);
    auto fi = f.handle("GET", "/model/info", "").body;
    CHECK(fi["fine_cutoff"] == 8);
    CHECK(fi["code_length"] == 3);
    CHECK(fi["name"] == "fine");
}

TEST_CASE("generate is deterministic and validated") {
    ModelService s(models().regular);
    auto a = post(s, "/generate", {{"code", kCode}, {"z_seed", 5}});
    auto b = post(s, "/generate", {{"code", kCode}, {"z_seed", 5}});
    REQUIRE(a.status == 200);
    CHECK(a.body["image"] == b.body["image"]);
    auto img = decode_png(base64_decode(a.body["image"].get<std::string>()));
    CHECK(img.width == 32);
    CHECK(img.height == 32);
    CHECK(post(s, "/generate", {{"code", kCode}, {"z_seed", 6}}).body["image"] != a.body["image"]);

    auto short_code = post(s, "/generate", {{"code", {0.5, 0.5}}});
    CHECK(short_code.status == 422);
    CHECK(short_code.body["field"] == "code");
    auto out_of_range = kCode;
    out_of_range[1] = 1.5;
    CHECK(post(s, "/generate", {{"code", out_of_range}}).status == 422);
    CHECK(post(s, "/generate", {{"code", kCode}, {"z_seed", -1}}).status == 422);
    CHECK(post(s, "/generate", {{"code", kCode}, {"z_seed", "x"}}).body["field"] == "z_seed");
    CHECK(s.handle("POST", "/generate", "{not json").status == 400);
    CHECK(s.handle("GET", "/generate", "").status == 405);
    CHECK(s.handle("GET", "/nope", "").status == 404);
    CHECK(short_code.body.contains("checkpoint_digest"));
    CHECK(s.handle("GET", "/nope", "").body.contains("checkpoint_digest"));
}

TEST_CASE("encode reads a code off an image") {
    ModelService s(models().regular);
    auto r = post(s, "/encode", {{"image", scene_png(77)}});
    REQUIRE(r.status == 200);
    CHECK(r.body["code"].size() == 7);
    CHECK(post(s, "/encode", {{"image", "bm90IGEgcG5n"}}).status == 415);
    CHECK(post(s, "/encode", {{"image", 3}}).status == 422);
    SceneSpec big(64);
    auto wrong_size = post(s, "/encode", {{"image", png_of(render_scene(grid_code(big.factors(), 0), big))}});
    CHECK(wrong_size.status == 422);
    CHECK(wrong_size.body["field"] == "image");
}

TEST_CASE("edit needs a fine model") {
    ModelService regular(models().regular);
    auto refused = post(regular, "/edit", {{"image", scene_png(1)}, {"fine_code", {0.5, 0.5, 0.5}}});
    CHECK(refused.status == 409);

    ModelService fine(models().fine);
    auto a = post(fine, "/edit", {{"image", scene_png(1)}, {"fine_code", {0.5, 0.25, 1.0}}});
    REQUIRE(a.status == 200);
    auto b = post(fine, "/edit", {{"image", scene_png(1)}, {"fine_code", {0.5, 0.25, 1.0}}});
    CHECK(a.body["image"] == b.body["image"]);
    CHECK(post(fine, "/edit", {{"image", scene_png(1)}, {"fine_code", kCode}}).status == 422);
    CHECK(post(fine, "/edit", {{"image", "%%%"}, {"fine_code", {0.5, 0.25, 1.0}}}).status == 415);
    CHECK(post(fine, "/generate", {{"code", kCode}}).status == 409);
}

TEST_CASE("traverse returns the anchor followed by the sweep") {
    ModelService s(models().regular);
    auto r = post(s, "/traverse", {{"anchor", {{"code", kCode}}}, {"factor", 2}, {"steps", 4}, {"z_seed", 1}});
    REQUIRE(r.status == 200);
    CHECK(r.body["images"].size() == 5);
    CHECK(r.body["codes"].size() == 4);
    CHECK(r.body["codes"][0][2] == 0.0);
    CHECK(r.body["codes"][3][2] == 1.0);
    CHECK(r.body["codes"][1][0] == kCode[0]);
    CHECK(post(s, "/traverse", {{"anchor", {{"code", kCode}}}, {"factor", 7}, {"steps", 4}}).status == 422);
    CHECK(post(s, "/traverse", {{"anchor", {{"code", kCode}}}, {"factor", 1}, {"steps", 1}}).status == 422);
    CHECK(post(s, "/traverse", {{"anchor", {{"image", scene_png(3)}}}, {"factor", 1}, {"steps", 3}}).status == 409);

    ModelService fine(models().fine);
    auto f = post(fine, "/traverse", {{"anchor", {{"image", scene_png(3)}}}, {"factor", 1}, {"steps", 3}});
    CAPTURE(f.body.dump());
    REQUIRE(f.status == 200);
    CHECK(f.body["images"].size() == 4);
    CHECK(post(fine, "/traverse", {{"anchor", {{"code", kCode}}}, {"factor", 1}, {"steps", 3}}).status == 409);
}

TEST_CASE("swapping the checkpoint changes the digest") {
    ModelService s(models().regular);
    const auto before = s.digest();
    auto a = post(s, "/generate", {{"code", kCode}});
    s.swap(models().regular2);
    CHECK(s.digest() != before);
    auto b = post(s, "/generate", {{"code", kCode}});
    CHECK(b.body["checkpoint_digest"] == s.digest());
    CHECK(a.body["image"] != b.body["image"]);
}

TEST_CASE("HTTP server answers on a real socket") {
    ModelService s(models().regular);
    const int port = s.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread server([&] { s.listen(); });
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    httplib::Result info;
    for (int i = 0; i < 50 && !info; ++i) {
        info = client.Get("/model/info");
        if (!info) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    REQUIRE(info);
    CHECK(info->status == 200);
    CHECK(info->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(json::parse(info->body)["checkpoint_digest"] == s.digest());

    auto gen = client.Post("/generate", json{{"code", kCode}, {"z_seed", 5}}.dump(), "application/json");
    REQUIRE(gen);
    CHECK(gen->status == 200);
    CHECK(json::parse(gen->body)["image"] == post(s, "/generate", {{"code", kCode}, {"z_seed", 5}}).body["image"]);
    auto bad = client.Post("/generate", "{}", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    auto preflight = client.Options("/generate");
    REQUIRE(preflight);
    CHECK(preflight->status == 204);

    s.stop();
    server.join();
}

TEST_CASE("command-line usage errors exit with status 2") {
    const std::string cli = DISENT_CLI_PATH;
    auto run = [&](const std::string& args) {
        const int rc = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    CHECK(run("frobnicate") == 2);
    CHECK(run("train --no-such-flag") == 2);
    CHECK(run("gen-data --resolution 32") == 2);  // --out missing
    CHECK(run("--help") == 0);
    CHECK(run("eval --checkpoint /nonexistent.ckpt --data /nonexistent") == 1);
}

TEST_CASE("train flags override the config file") {
    test::TempDir tmp;
    const std::string cli = DISENT_CLI_PATH;
    const auto data = tmp.path() / "data";
    REQUIRE(std::system((cli + " gen-data --resolution 32 --out " + data.string() + " >/dev/null 2>&1").c_str()) == 0);
    const auto cfg_path = tmp.path() / "c.json";
    std::ofstream(cfg_path) << json{{"name", "fromfile"},
                                    {"eta", 0.5},
                                    {"seed", 7},
                                    {"total_images", 32},
                                    {"optim", {{"batch", 16}}},
                                    {"network", regular_net().to_json()}}
                                   .dump();
    const auto runs = tmp.path() / "runs";
    const auto cmd = cli + " train --data " + data.string() + " --config " + cfg_path.string() +
                     " --eta 0.25 --out " + runs.string() + " >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::ifstream in(runs / "fromfile" / "config.json");
    const auto written = json::parse(in);
    CHECK(written["eta"] == 0.25);
    CHECK(written["seed"] == 7);
    CHECK(written["total_images"] == 32);
    CHECK(written["optim"]["batch"] == 16);
    CHECK(written["network"]["f_0"] == 8);
}
