#include "plenopress/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "plenopress/error.hpp"

namespace plenopress {

RasterImage::RasterImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ContractError("image dimensions must be non-negative");
    samples_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

void RasterImage::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i < samples_.size(); i += kChannels) {
        samples_[i] = r;
        samples_[i + 1] = g;
        samples_[i + 2] = b;
    }
}

void RasterImage::blit(const RasterImage& src, int sx, int sy, int w, int h, int dx, int dy) {
    if (sx < 0 || sy < 0 || sx + w > src.width_ || sy + h > src.height_ || dx < 0 || dy < 0 ||
        dx + w > width_ || dy + h > height_)
        throw ContractError("blit: block out of bounds");
    const std::size_t row_bytes = static_cast<std::size_t>(w) * kChannels;
    for (int y = 0; y < h; ++y)
        std::memcpy(&samples_[index(dx, dy + y, 0)], &src.samples_[src.index(sx, sy + y, 0)], row_bytes);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
    auto e = path.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ext;
}

int read_ppm_token(std::istream& in) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw IoError("malformed PPM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

}  // namespace

RasterImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6') throw IoError(path.string() + ": not a binary PPM (P6)");
    const int width = read_ppm_token(in);
    const int height = read_ppm_token(in);
    const int maxval = read_ppm_token(in);
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit PPM is supported");
    RasterImage image(width, height);
    auto samples = image.samples();
    in.read(reinterpret_cast<char*>(samples.data()), static_cast<std::streamsize>(samples.size()));
    if (!in) throw IoError(path.string() + ": truncated PPM data");
    return image;
}

void write_ppm(const RasterImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
    auto samples = image.samples();
    out.write(reinterpret_cast<const char*>(samples.data()), static_cast<std::streamsize>(samples.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

RasterImage read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw IoError(path.string() + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    RasterImage image(static_cast<int>(png.width), static_cast<int>(png.height));
    auto samples = image.samples();
    if (!png_image_finish_read(&png, nullptr, samples.data(), 0, nullptr)) {
        std::string message = png.message;
        png_image_free(&png);
        throw IoError(path.string() + ": " + message);
    }
    return image;
}

void write_png(const RasterImage& image, const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = PNG_FORMAT_RGB;
    auto samples = image.samples();
    if (!png_image_write_to_file(&png, path.c_str(), 0, samples.data(), 0, nullptr))
        throw IoError(path.string() + ": " + png.message);
}

RasterImage read_image(const std::filesystem::path& path) {
    auto f = open_file(path, "rb");
    unsigned char sig[8] = {};
    const auto got = std::fread(sig, 1, sizeof(sig), f.get());
    f.reset();
    if (got == sizeof(sig) && png_sig_cmp(sig, 0, sizeof(sig)) == 0) return read_png(path);
    if (got >= 2 && sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
    throw IoError(path.string() + ": unrecognised image format (expected PNG or P6 PPM)");
}

void write_image(const RasterImage& image, const std::filesystem::path& path) {
    if (has_extension(path, ".ppm")) write_ppm(image, path);
    else write_png(image, path);
}

}  // namespace plenopress
