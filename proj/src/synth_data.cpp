#include "disent/synth_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "disent/error.hpp"

namespace disent {

namespace fs = std::filesystem;

namespace {

// Geometry, in units of the image side length.
constexpr double kMargin = 0.23;
constexpr double kBaseSize = 0.09;
constexpr double kSizeStep = 0.03;
constexpr double kSquareHalfSide = 0.85;
constexpr double kTriangleRadius = 1.2;
constexpr int kSuper = 4;
constexpr int kSamples = kSuper * kSuper;

using Rgb = std::array<int, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
    const double hh = std::fmod(h, 1.0) * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s);
    const double q = v * (1 - s * f);
    const double t = v * (1 - s * (1 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    return {static_cast<int>(std::lround(r * 255)), static_cast<int>(std::lround(g * 255)),
            static_cast<int>(std::lround(b * 255))};
}

Rgb object_color(int level) { return hsv_to_rgb(level / 4.0, 0.85, 0.9); }
Rgb wall_color(int level) { return hsv_to_rgb(level / 4.0 + 0.125, 0.35, 0.95); }

// Final 8-bit channel for `covered` of 16 subsamples at brightness level b.
// Brightness multiplies by (2 + b) / 5, i.e. 0.4 .. 1.0.
int shade(int wall, int obj, int covered, int b) {
    const int sum = wall * (kSamples - covered) + obj * covered;
    return (sum * (2 + b) + 40) / 80;
}

double shape_area_factor(Shape shape) {
    switch (shape) {
        case Shape::kCircle: return std::numbers::pi;
        case Shape::kSquare: return 4.0 * kSquareHalfSide * kSquareHalfSide;
        case Shape::kTriangle: return 3.0 * std::sqrt(3.0) / 4.0 * kTriangleRadius * kTriangleRadius;
    }
    return 1.0;
}

struct Geometry {
    Shape shape;
    double cx, cy, size;  // pixel units
    double extent;        // bounding radius
};

struct Levels {
    int shape, scale, obj_hue, wall_hue, x, y, brightness;
};

Levels levels_of(const FactorCode& code, const SceneSpec& spec) {
    const auto& fs = spec.factors();
    code.check(fs);
    return {fs.level_of(0, code[0]), fs.level_of(1, code[1]), fs.level_of(2, code[2]), fs.level_of(3, code[3]),
            fs.level_of(4, code[4]), fs.level_of(5, code[5]), fs.level_of(6, code[6])};
}

double x_center(int level, int res) { return res * (kMargin + level * (1 - 2 * kMargin) / 7.0); }
double y_center(int level, int res) { return res * (kMargin + level * (1 - 2 * kMargin) / 4.0); }
double object_size(int level, int res) { return res * (kBaseSize + kSizeStep * level); }

Geometry geometry_of(const Levels& lv, int res) {
    Geometry g{static_cast<Shape>(lv.shape), x_center(lv.x, res), y_center(lv.y, res), object_size(lv.scale, res), 0};
    switch (g.shape) {
        case Shape::kCircle: g.extent = g.size; break;
        case Shape::kSquare: g.extent = g.size * kSquareHalfSide * std::numbers::sqrt2; break;
        case Shape::kTriangle: g.extent = g.size * kTriangleRadius; break;
    }
    return g;
}

bool inside(const Geometry& g, double px, double py) {
    const double dx = px - g.cx;
    const double dy = py - g.cy;
    switch (g.shape) {
        case Shape::kCircle: return dx * dx + dy * dy <= g.size * g.size;
        case Shape::kSquare: {
            const double h = g.size * kSquareHalfSide;
            return std::abs(dx) <= h && std::abs(dy) <= h;
        }
        case Shape::kTriangle: {
            // Upward-pointing equilateral triangle with circumcentre (cx, cy).
            const double r = g.size * kTriangleRadius;
            const double s3 = std::sqrt(3.0);
            const double ax = 0, ay = -r;
            const double bx = r * s3 / 2, by = r / 2;
            const double cx = -r * s3 / 2, cy = r / 2;
            auto edge = [&](double x0, double y0, double x1, double y1) {
                return (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0);
            };
            const double e0 = edge(ax, ay, bx, by);
            const double e1 = edge(bx, by, cx, cy);
            const double e2 = edge(cx, cy, ax, ay);
            return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
    }
    return false;
}

}  // namespace

SceneSpec::SceneSpec(int res) : resolution(res) {
    if (res != 32 && res != 64 && res != 128)
        throw InvalidArgument("scene resolution must be one of 32, 64, 128");
}

const FactorSpec& SceneSpec::factor_spec() {
    static const FactorSpec spec({{"object_shape", 3},
                                  {"object_scale", 4},
                                  {"object_hue", 4},
                                  {"wall_hue", 4},
                                  {"x_position", 8},
                                  {"y_position", 5},
                                  {"brightness", 4}});
    return spec;
}

const FactorSpec& SceneSpec::factors() const { return factor_spec(); }

RgbImage render_scene_rgb(const FactorCode& code, const SceneSpec& spec) {
    const Levels lv = levels_of(code, spec);
    const int res = spec.resolution;
    const Geometry g = geometry_of(lv, res);
    const Rgb wall = wall_color(lv.wall_hue);
    const Rgb obj = object_color(lv.obj_hue);

    RgbImage img(res, res);
    const int x0 = std::max(0, static_cast<int>(std::floor(g.cx - g.extent)) - 1);
    const int x1 = std::min(res - 1, static_cast<int>(std::ceil(g.cx + g.extent)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(g.cy - g.extent)) - 1);
    const int y1 = std::min(res - 1, static_cast<int>(std::ceil(g.cy + g.extent)) + 1);

    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            int covered = 0;
            if (x >= x0 && x <= x1 && y >= y0 && y <= y1) {
                for (int sy = 0; sy < kSuper; ++sy)
                    for (int sx = 0; sx < kSuper; ++sx)
                        covered += inside(g, x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper) ? 1 : 0;
            }
            auto* px = img.at(x, y);
            for (int ch = 0; ch < 3; ++ch)
                px[ch] = static_cast<std::uint8_t>(shade(wall[ch], obj[ch], covered, lv.brightness));
        }
    }
    return img;
}

torch::Tensor render_scene(const FactorCode& code, const SceneSpec& spec) {
    return to_tensor(render_scene_rgb(code, spec));
}

torch::Tensor render_batch(const torch::Tensor& codes, const SceneSpec& spec) {
    TORCH_CHECK(codes.dim() == 2, "render_batch expects an N x K code matrix");
    const auto n = codes.size(0);
    auto out = torch::empty({n, 3, spec.resolution, spec.resolution});
    auto c = codes.to(torch::kFloat64).contiguous();
    for (std::int64_t i = 0; i < n; ++i) out[i].copy_(render_scene(FactorCode::from_tensor(c[i]), spec));
    return out;
}

namespace {

double color_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2])) / 3.0;
}

std::array<double, 3> shaded(const Rgb& c, int covered, const Rgb& other, int b) {
    return {static_cast<double>(shade(other[0], c[0], covered, b)),
            static_cast<double>(shade(other[1], c[1], covered, b)),
            static_cast<double>(shade(other[2], c[2], covered, b))};
}

}  // namespace

AnalyticEstimate analytic_encode(const RgbImage& image, const SceneSpec& spec) {
    const int res = spec.resolution;
    if (image.width != res || image.height != res)
        throw InvalidArgument("analytic_encode: image size does not match the scene resolution");

    auto pixel = [&](int x, int y) {
        const auto* p = image.at(x, y);
        return std::array<double, 3>{double(p[0]), double(p[1]), double(p[2])};
    };

    AnalyticEstimate est;

    // Wall hue and brightness from the four corners, which the object never reaches.
    std::array<double, 3> corner{0, 0, 0};
    for (auto [x, y] : {std::pair{0, 0}, std::pair{res - 1, 0}, std::pair{0, res - 1}, std::pair{res - 1, res - 1}}) {
        const auto p = pixel(x, y);
        for (int ch = 0; ch < 3; ++ch) corner[ch] += p[ch] / 4.0;
    }
    int wall_level = 0, bright_level = 0;
    double best = 1e300;
    for (int j = 0; j < 4; ++j)
        for (int b = 0; b < 4; ++b) {
            const double d = color_dist(corner, shaded(wall_color(j), 0, wall_color(j), b));
            if (d < best) best = d, wall_level = j, bright_level = b;
        }
    est.wall_residual = best;
    const Rgb wall = wall_color(wall_level);
    const auto wall_px = shaded(wall, 0, wall, bright_level);

    // Object hue: the template whose fully covered colour matches most pixels.
    int obj_level = 0;
    int best_count = -1;
    for (int i = 0; i < 4; ++i) {
        const auto full = shaded(object_color(i), kSamples, wall, bright_level);
        int count = 0;
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                if (color_dist(pixel(x, y), full) <= 1.0) ++count;
        if (count > best_count) best_count = count, obj_level = i;
    }
    const Rgb obj = object_color(obj_level);

    // Soft coverage by projecting each pixel onto the wall->object segment.
    const double scale = (2 + bright_level) / 5.0;
    std::array<double, 3> w{}, o{};
    for (int ch = 0; ch < 3; ++ch) w[ch] = wall[ch] * scale, o[ch] = obj[ch] * scale;
    std::array<double, 3> dir{o[0] - w[0], o[1] - w[1], o[2] - w[2]};
    const double dir2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];

    std::vector<double> cover(static_cast<std::size_t>(res) * res, 0.0);
    double area = 0, mx = 0, my = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const auto p = pixel(x, y);
            double a = 0;
            if (dir2 > 0)
                a = ((p[0] - w[0]) * dir[0] + (p[1] - w[1]) * dir[1] + (p[2] - w[2]) * dir[2]) / dir2;
            a = std::clamp(a, 0.0, 1.0);
            if (color_dist(p, wall_px) <= 1.0) a = 0.0;
            cover[static_cast<std::size_t>(y) * res + x] = a;
            area += a;
            mx += a * (x + 0.5);
            my += a * (y + 0.5);
        }

    const auto& fs = spec.factors();
    std::vector<double> values(SceneSpec::kNumFactors, 0.0);
    values[SceneSpec::kWallHue] = fs.grid_value(SceneSpec::kWallHue, wall_level);
    values[SceneSpec::kBrightness] = fs.grid_value(SceneSpec::kBrightness, bright_level);
    values[SceneSpec::kObjectHue] = fs.grid_value(SceneSpec::kObjectHue, obj_level);

    if (area < 1.0 || best_count <= 0 || dir2 <= 0) {
        est.low_confidence = true;
        est.snap_residual = 1.0;
        est.code = FactorCode(values);
        return est;
    }

    const double cx = mx / area;
    const double cy = my / area;
    double m20 = 0, m02 = 0, m22 = 0, m40 = 0, m04 = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const double a = cover[static_cast<std::size_t>(y) * res + x];
            if (a == 0) continue;
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            m20 += a * dx * dx;
            m02 += a * dy * dy;
            m22 += a * dx * dx * dy * dy;
            m40 += a * dx * dx * dx * dx;
            m04 += a * dy * dy * dy * dy;
        }
    // Axis-aligned squares have a strongly anisotropic fourth moment
    // ((m40 + m04) / 2 m22 = 9/5); discs and equilateral triangles are
    // isotropic (ratio 3) and differ in their normalised second moment
    // (1/2pi vs 0.19245).
    const double quartic = (m40 + m04) / (2.0 * std::max(m22, 1e-12));
    const double spread = (m20 + m02) / (area * area);
    Shape shape = Shape::kCircle;
    if (quartic < 2.4)
        shape = Shape::kSquare;
    else if (spread > 0.1759)
        shape = Shape::kTriangle;

    const double size = std::sqrt(area / shape_area_factor(shape));
    const double scale_t = (size / res - kBaseSize) / kSizeStep;
    const double x_t = (cx / res - kMargin) / ((1 - 2 * kMargin) / 7.0);
    const double y_t = (cy / res - kMargin) / ((1 - 2 * kMargin) / 4.0);

    auto snap = [&](int k, double t) {
        const int m = fs[k].cardinality;
        const int level = std::clamp(static_cast<int>(std::lround(t)), 0, m - 1);
        est.snap_residual = std::max(est.snap_residual, std::abs(t - level));
        values[static_cast<std::size_t>(k)] = fs.grid_value(k, level);
    };
    values[SceneSpec::kShape] = fs.grid_value(SceneSpec::kShape, static_cast<int>(shape));
    snap(SceneSpec::kScale, scale_t);
    snap(SceneSpec::kX, x_t);
    snap(SceneSpec::kY, y_t);

    est.code = FactorCode(values);
    est.low_confidence = est.wall_residual > 3.0 || est.snap_residual > 0.35;
    return est;
}

AnalyticEstimate analytic_encode(const torch::Tensor& image, const SceneSpec& spec) {
    if (image.dim() != 3 || image.size(0) != 3)
        throw InvalidArgument("analytic_encode expects a 3xRxR image tensor");
    return analytic_encode(from_tensor(image), spec);
}

torch::Tensor analytic_encode_batch(const torch::Tensor& images, const SceneSpec& spec) {
    TORCH_CHECK(images.dim() == 4, "analytic_encode_batch expects N x 3 x R x R");
    const auto n = images.size(0);
    auto out = torch::empty({n, SceneSpec::kNumFactors}, torch::kFloat64);
    for (std::int64_t i = 0; i < n; ++i) out[i].copy_(analytic_encode(images[i], spec).code.to_tensor(torch::kFloat64));
    return out;
}

// --- dataset persistence -------------------------------------------------

nlohmann::json DatasetManifest::to_json() const {
    return {{"name", name},
            {"factor_spec", spec.to_json()},
            {"resolution", resolution},
            {"count", count},
            {"seed", seed},
            {"layout_version", layout_version},
            {"digest", digest}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.spec = FactorSpec::from_json(j.at("factor_spec"));
        m.resolution = j.at("resolution").get<int>();
        m.count = j.at("count").get<std::int64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.layout_version = j.at("layout_version").get<int>();
        m.digest = j.value("digest", "");
    } catch (const nlohmann::json::exception& e) {
        throw DatasetIntegrityError(-1, std::string("malformed manifest: ") + e.what());
    }
    return m;
}

std::string image_filename(std::int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%07lld.png", static_cast<long long>(index));
    return buf;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

DatasetManifest generate_dataset(const SceneSpec& spec, const fs::path& out_dir, std::uint64_t seed) {
    const auto& factors = spec.factors();
    const std::int64_t count = factors.grid_size();
    const fs::path images_dir = out_dir / "images";
    const fs::path codes_path = out_dir / "codes.csv";
    const fs::path manifest_path = out_dir / "manifest.json";

    const bool had_dir = fs::exists(out_dir);
    auto cleanup = [&] {
        std::error_code ec;
        fs::remove(manifest_path, ec);
        fs::remove(codes_path, ec);
        fs::remove_all(images_dir, ec);
        if (!had_dir) fs::remove(out_dir, ec);
    };

    try {
        fs::create_directories(images_dir);
        fs::remove(manifest_path);

        std::ostringstream csv;
        const auto names = factors.names();
        for (std::size_t k = 0; k < names.size(); ++k) csv << (k ? "," : "") << names[k];
        csv << "\n";

        std::string image_digests;
        image_digests.reserve(static_cast<std::size_t>(count) * 64);
        for (std::int64_t i = 0; i < count; ++i) {
            const FactorCode code = grid_code(factors, i);
            for (int k = 0; k < code.size(); ++k) csv << (k ? "," : "") << format_double(code[k]);
            csv << "\n";
            const auto png = encode_png(render_scene_rgb(code, spec));
            write_file(images_dir / image_filename(i), png.data(), png.size());
            image_digests += sha256_hex(png.data(), png.size());
        }
        const std::string csv_text = csv.str();
        write_file(codes_path, csv_text.data(), csv_text.size());

        DatasetManifest m;
        m.name = "shapes2d-mini";
        m.spec = factors;
        m.resolution = spec.resolution;
        m.count = count;
        m.seed = seed;
        m.digest = sha256_hex(csv_text + image_digests);
        const std::string text = m.to_json().dump(2) + "\n";
        write_file(manifest_path, text.data(), text.size());
        return m;
    } catch (const Error& e) {
        cleanup();
        throw DatasetWriteError(e.what());
    } catch (const std::exception& e) {
        cleanup();
        throw DatasetWriteError(e.what());
    }
}

Dataset Dataset::load(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw DatasetIntegrityError(-1, "missing manifest: " + manifest_path.string());

    nlohmann::json j;
    try {
        std::ifstream in(manifest_path);
        in >> j;
    } catch (const std::exception& e) {
        throw DatasetIntegrityError(-1, std::string("unreadable manifest: ") + e.what());
    }

    Dataset ds;
    ds.manifest_ = DatasetManifest::from_json(j);
    ds.dir_ = dir;
    if (ds.manifest_.layout_version != DatasetManifest::kLayoutVersion)
        throw DatasetIntegrityError(-1, "unsupported layout version " + std::to_string(ds.manifest_.layout_version));

    std::ifstream csv(dir / "codes.csv");
    if (!csv) throw DatasetIntegrityError(-1, "missing codes.csv");
    std::string line;
    std::getline(csv, line);
    {
        std::vector<std::string> header;
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
        if (header != ds.manifest_.spec.names())
            throw DatasetIntegrityError(-1, "codes.csv header does not match the factor spec");
    }

    const int k = ds.manifest_.spec.size();
    const auto n = ds.manifest_.count;
    ds.codes_ = torch::empty({n, k}, torch::kFloat64);
    auto a = ds.codes_.accessor<double, 2>();
    std::int64_t row = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        if (row >= n) throw DatasetIntegrityError(row, "codes.csv has more rows than the manifest count");
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int c = 0; c < k; ++c) {
            double v = 0;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{} || !(v >= 0.0 && v <= 1.0))
                throw DatasetIntegrityError(row, "bad code value in row " + std::to_string(row));
            a[row][c] = v;
            p = res.ptr;
            if (c + 1 < k) {
                if (p == end || *p != ',') throw DatasetIntegrityError(row, "short row " + std::to_string(row));
                ++p;
            }
        }
        ++row;
    }
    if (row != n) throw DatasetIntegrityError(row, "codes.csv has " + std::to_string(row) + " rows, manifest says " +
                                                       std::to_string(n));

    for (std::int64_t i = 0; i < n; ++i)
        if (!fs::exists(dir / "images" / image_filename(i)))
            throw DatasetIntegrityError(i, "missing image for index " + std::to_string(i));

    ds.exhaustive_ = n == ds.manifest_.spec.grid_size();
    if (ds.exhaustive_) {
        for (std::int64_t i = 0; i < n && ds.exhaustive_; ++i) {
            const auto expect = grid_code(ds.manifest_.spec, i);
            for (int c = 0; c < k; ++c)
                if (std::abs(a[i][c] - expect[c]) > 1e-9) {
                    ds.exhaustive_ = false;
                    break;
                }
        }
    }
    return ds;
}

Dataset Dataset::from_memory(DatasetManifest manifest, torch::Tensor codes, torch::Tensor images_u8) {
    if (codes.dim() != 2 || codes.size(0) != manifest.count || codes.size(1) != manifest.spec.size())
        throw InvalidArgument("from_memory: code matrix shape does not match the manifest");
    if (images_u8.dim() != 4 || images_u8.size(0) != manifest.count || images_u8.size(1) != 3 ||
        images_u8.size(2) != manifest.resolution || images_u8.size(3) != manifest.resolution)
        throw InvalidArgument("from_memory: image tensor shape does not match the manifest");
    Dataset ds;
    ds.manifest_ = std::move(manifest);
    ds.codes_ = codes.to(torch::kFloat64).contiguous();
    ds.cache_ = images_u8.to(torch::kUInt8).contiguous();
    ds.exhaustive_ = ds.manifest_.count == ds.manifest_.spec.grid_size();
    return ds;
}

torch::Tensor Dataset::load_u8(std::int64_t index) const {
    if (index < 0 || index >= size()) throw InvalidArgument("dataset index out of range");
    if (cache_.defined()) return cache_[index];
    RgbImage img;
    try {
        img = read_png(dir_ / "images" / image_filename(index));
    } catch (const std::exception& e) {
        throw DatasetIntegrityError(index, "cannot read image " + std::to_string(index) + ": " + e.what());
    }
    if (img.width != resolution() || img.height != resolution())
        throw DatasetIntegrityError(index, "image " + std::to_string(index) + " has the wrong size");
    auto hwc = torch::from_blob(img.pixels.data(), {img.height, img.width, 3}, torch::kUInt8);
    return hwc.permute({2, 0, 1}).clone();
}

torch::Tensor Dataset::image(std::int64_t index) const { return uint8_to_float(load_u8(index)); }

torch::Tensor Dataset::images(const std::vector<std::int64_t>& indices) const {
    const auto idx = static_cast<std::int64_t>(indices.size());
    if (cache_.defined()) {
        auto t = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()), torch::kInt64);
        if (idx > 0 && (t.min().item<std::int64_t>() < 0 || t.max().item<std::int64_t>() >= size()))
            throw InvalidArgument("dataset index out of range");
        return uint8_to_float(cache_.index_select(0, t));
    }
    auto out = torch::empty({idx, 3, resolution(), resolution()}, torch::kUInt8);
    for (std::int64_t i = 0; i < idx; ++i) out[i].copy_(load_u8(indices[static_cast<std::size_t>(i)]));
    return uint8_to_float(out);
}

void Dataset::preload() {
    if (cache_.defined()) return;
    auto all = torch::empty({size(), 3, resolution(), resolution()}, torch::kUInt8);
    for (std::int64_t i = 0; i < size(); ++i) all[i].copy_(load_u8(i));
    cache_ = all;
}

std::int64_t Dataset::index_of(const FactorCode& code) const {
    if (!exhaustive_) throw InvalidArgument("index_of requires an exhaustively enumerated dataset");
    return grid_index(spec(), code);
}

Dataset Dataset::with_codes(torch::Tensor codes) const {
    if (!codes.sizes().equals(codes_.sizes())) throw InvalidArgument("with_codes: shape mismatch");
    Dataset copy = *this;
    copy.codes_ = codes.to(torch::kFloat64).contiguous();
    return copy;
}

}  // namespace disent
