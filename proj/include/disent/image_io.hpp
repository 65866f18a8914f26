#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace disent {

// 8-bit RGB raster, row-major HxWx3.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* at(int x, int y) const {
        return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    }

    bool operator==(const RgbImage&) const = default;
};

std::vector<std::uint8_t> encode_png(const RgbImage& image);
// Throws InvalidArgument on anything libpng cannot decode.
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

// v_tensor = v_uint8 / 127.5 - 1, as a 3xHxW float tensor.
torch::Tensor to_tensor(const RgbImage& image);
// Inverse mapping with rounding and clamping. Accepts 3xHxW.
RgbImage from_tensor(const torch::Tensor& chw);

// Batch helpers for N x 3 x H x W uint8 storage.
torch::Tensor uint8_to_float(const torch::Tensor& nchw_u8);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const void* data, std::size_t size);

// Tiles equally sized images into a grid. `marked` cells get a red border.
RgbImage tile_images(const std::vector<RgbImage>& images, int columns, const std::vector<bool>& marked = {});

}  // namespace disent
