#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace plenopress {

/// 8-bit interleaved RGB image, row-major.
class RasterImage {
public:
    static constexpr int kChannels = 3;

    RasterImage() = default;
    RasterImage(int width, int height, std::uint8_t fill = 0);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t sample_count() const { return samples_.size(); }

    std::uint8_t& at(int x, int y, int ch) { return samples_[index(x, y, ch)]; }
    std::uint8_t at(int x, int y, int ch) const { return samples_[index(x, y, ch)]; }

    std::span<std::uint8_t> samples() { return samples_; }
    std::span<const std::uint8_t> samples() const { return samples_; }

    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);

    /// Copies a w x h block from `src` at (sx, sy) to (dx, dy) in this image.
    void blit(const RasterImage& src, int sx, int sy, int w, int h, int dx, int dy);

    bool operator==(const RasterImage& other) const = default;

private:
    std::size_t index(int x, int y, int ch) const {
        return (static_cast<std::size_t>(y) * width_ + x) * kChannels + ch;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> samples_;
};

/// Reads PNG (by signature) or binary PPM (P6, maxval 255). Gray and alpha
/// PNGs are converted to RGB; 16-bit PNGs are rejected.
RasterImage read_image(const std::filesystem::path& path);

/// Writes PNG unless the extension is .ppm.
void write_image(const RasterImage& image, const std::filesystem::path& path);

RasterImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RasterImage& image, const std::filesystem::path& path);
RasterImage read_png(const std::filesystem::path& path);
void write_png(const RasterImage& image, const std::filesystem::path& path);

}  // namespace plenopress
