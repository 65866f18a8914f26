#include "disent/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/beast/core/detail/base64.hpp>
#include <openssl/evp.h>
#include <png.h>

#include "disent/error.hpp"

namespace disent {

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
        throw Error("png", std::string("png size query failed: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
        throw Error("png", std::string("png encode failed: ") + img.message);
    out.resize(size);
    return out;
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (bytes.empty() || !png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw InvalidArgument("not a decodable PNG image");
    img.format = PNG_FORMAT_RGB;
    RgbImage out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw InvalidArgument(std::string("png decode failed: ") + img.message);
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw Error("io", "write failed for " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
    const auto bytes = encode_png(image);
    write_file(path, bytes.data(), bytes.size());
}

RgbImage read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

torch::Tensor to_tensor(const RgbImage& image) {
    auto hwc = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()),
                                {image.height, image.width, 3}, torch::kUInt8);
    return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5f).sub(1.0f).contiguous();
}

RgbImage from_tensor(const torch::Tensor& chw) {
    TORCH_CHECK(chw.dim() == 3 && chw.size(0) == 3, "expected a 3xHxW image tensor");
    auto t = chw.detach().to(torch::kFloat32).add(1.0f).mul(127.5f).round().clamp(0, 255);
    auto hwc = t.permute({1, 2, 0}).to(torch::kUInt8).contiguous();
    RgbImage out(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)));
    std::copy_n(hwc.data_ptr<std::uint8_t>(), out.pixels.size(), out.pixels.begin());
    return out;
}

torch::Tensor uint8_to_float(const torch::Tensor& nchw_u8) {
    return nchw_u8.to(torch::kFloat32).div(127.5f).sub(1.0f);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    namespace b64 = boost::beast::detail::base64;
    std::string out(b64::encoded_size(bytes.size()), '\0');
    out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    namespace b64 = boost::beast::detail::base64;
    // The decoder stops at the first '=', so the padding is checked here.
    std::size_t body = text.size();
    while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
    if (text.size() % 4 != 0) throw InvalidArgument("invalid base64 payload");
    std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
    auto [written, read] = b64::decode(out.data(), text.data(), body);
    if (read != body) throw InvalidArgument("invalid base64 payload");
    out.resize(written);
    return out;
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr)) throw Error("digest", "sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_hex(const std::string& data) { return sha256_hex(data.data(), data.size()); }

std::string sha256_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return sha256_hex(bytes.data(), bytes.size());
}

RgbImage tile_images(const std::vector<RgbImage>& images, int columns, const std::vector<bool>& marked) {
    if (images.empty() || columns < 1) throw InvalidArgument("tile_images: nothing to tile");
    const int w = images.front().width;
    const int h = images.front().height;
    const int rows = (static_cast<int>(images.size()) + columns - 1) / columns;
    RgbImage out(w * columns, h * rows);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.width != w || img.height != h) throw InvalidArgument("tile_images: size mismatch");
        const int ox = static_cast<int>(i % columns) * w;
        const int oy = static_cast<int>(i / columns) * h;
        const bool mark = i < marked.size() && marked[i];
        const int border = std::max(1, w / 32);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto* dst = out.at(ox + x, oy + y);
                const bool edge = x < border || y < border || x >= w - border || y >= h - border;
                if (mark && edge) {
                    dst[0] = 255, dst[1] = 0, dst[2] = 0;
                } else {
                    std::copy_n(img.at(x, y), 3, dst);
                }
            }
    }
    return out;
}

}  // namespace disent
