#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "plenopress/camera_geometry.hpp"
#include "plenopress/image.hpp"
#include "plenopress/preprocess.hpp"

namespace plenopress {

enum class Resample { Nearest, Bilinear };

struct RenderConfig {
    int views_per_side = 5;
    int patch_size = 1;
    int view_step = 1;
    bool flip_patches = false;
    std::optional<int> target_width;
    std::optional<int> target_height;
    Resample resample = Resample::Bilinear;

    /// Side of the square every view window must fit in: p + (V - 1) s.
    int window_extent() const { return patch_size + (views_per_side - 1) * view_step; }
    void validate() const;
};

/// V x V sub-aperture views, view (i, j) at index i * V + j. Row index i
/// moves the patch window vertically, column index j horizontally.
struct ViewGrid {
    int views_per_side = 0;
    std::vector<RasterImage> views;

    const RasterImage& at(int i, int j) const { return views[static_cast<std::size_t>(i) * views_per_side + j]; }
    RasterImage& at(int i, int j) { return views[static_cast<std::size_t>(i) * views_per_side + j]; }
    int central_index() const { return views_per_side / 2; }

    /// view_{i}_{j}.png for every view plus index.cfg with sizes and config.
    void save(const std::filesystem::path& dir, const RenderConfig& cfg) const;
};

/// Stitches one p x p patch per cropped microimage into each view.
ViewGrid render_views(const PreprocessedImage& pre, const RenderConfig& cfg, unsigned threads = 0);

/// Raw sensor input: crops to `crop_size` first, then renders.
ViewGrid render_views(const RasterImage& raw, const CameraSpec& spec, int crop_size, const RenderConfig& cfg,
                      unsigned threads = 0);

RasterImage resize_image(const RasterImage& src, int width, int height, Resample mode);

enum class DistortionMetric { Mse, Psnr, MsSsim };

/// Mean over all V^2 views of the per-view metric.
double view_pair_distortion(const ViewGrid& a, const ViewGrid& b, DistortionMetric metric);

}  // namespace plenopress
