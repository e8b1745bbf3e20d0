#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "plenopress/camera_geometry.hpp"
#include "plenopress/image.hpp"

namespace plenopress {

/// PSNR value reported for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// Mean squared error over every RGB sample.
double mse(const RasterImage& a, const RasterImage& b);

/// 10 log10(255^2 / MSE) over all RGB samples jointly; kPsnrIdentical when MSE is 0.
double psnr(const RasterImage& a, const RasterImage& b);

/// Five-scale MS-SSIM on BT.601 luma: 11x11 Gaussian window (sigma 1.5),
/// 2x2 average pooling between scales, negative terms clamped to zero.
/// Both dimensions must be at least 176.
double ms_ssim(const RasterImage& a, const RasterImage& b);

/// Same construction on a single-channel plane, values on the 0..255 scale.
double ms_ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int width, int height);

/// Y = 0.299 R + 0.587 G + 0.114 B, row-major.
std::vector<double> luma_plane(const RasterImage& image);

/// Bits per pixel of the original sensor, whatever resolution was coded.
double bits_per_pixel(double bit_count, const CameraSpec& spec);

struct RdPoint {
    double bpp = 0.0;
    double psnr = 0.0;
    double ms_ssim = 0.0;
};

struct RdCurve {
    std::string label;
    std::vector<RdPoint> points;

    /// Throws when bpp is not strictly increasing; returns false when
    /// quality decreases somewhere (a warning condition).
    bool validate() const;
};

/// CSV with header `label,bpp,psnr,ms_ssim`; one curve per distinct label,
/// points sorted by bpp.
std::vector<RdCurve> read_rd_csv(const std::filesystem::path& path);
void write_rd_csv(const std::vector<RdCurve>& curves, const std::filesystem::path& path);
void append_rd_row(const std::string& label, const RdPoint& point, const std::filesystem::path& path);

enum class QualityAxis { Psnr, MsSsim };

struct BdRateResult {
    double percent = 0.0;
    bool non_monotonic_fit = false;
    bool dropped_infinite_points = false;
    bool quality_not_increasing = false;
};

/// Bjontegaard rate difference of `test` against `reference`: cubic least
/// squares fits of log10(bpp) over quality, integrated over the shared
/// quality interval. Negative means `test` needs fewer bits.
BdRateResult bd_rate(const RdCurve& reference, const RdCurve& test, QualityAxis axis = QualityAxis::Psnr);

}  // namespace plenopress
