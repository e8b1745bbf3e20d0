#pragma once

#include <filesystem>
#include <vector>

#include "plenopress/camera_geometry.hpp"
#include "plenopress/image.hpp"

namespace plenopress {

/// Microimages cropped to d x d around each complete lens center and laid
/// out on a rectangular grid (tile (r, c) at pixel (c d, r d)).
struct PreprocessedImage {
    RasterImage image;
    int crop_size = 0;
    int grid_rows = 0;
    int grid_cols = 0;
    CameraSpec source_spec;

    /// Sidecar metadata; the camera spec is embedded with a `spec.` prefix.
    void save_sidecar(const std::filesystem::path& path,
                      const std::filesystem::path& image_name = {}) const;
    /// Loads the sidecar and the image it names (or `image_path` when given).
    static PreprocessedImage load(const std::filesystem::path& sidecar_path,
                                  const std::filesystem::path& image_path = {});
};

/// Integer pixel where a window of `size` centered on `center` starts:
/// round(center - size / 2), ties toward negative infinity.
int window_origin(double center, double size);

/// White-image compensation. Each channel is scaled by max(white) /
/// max(white, floor * max(white)) and rounded to 8 bits.
RasterImage devignette(const RasterImage& raw, const RasterImage& white, double floor_fraction);

/// Crops the d x d window centered on every complete microlens. Even-column
/// hex offsets are absorbed by taking each window at its true center.
PreprocessedImage crop_and_align(const RasterImage& source, const CameraSpec& spec, int crop_size,
                                 unsigned threads = 0);

/// Writes every tile back into a sensor-sized image; pixels outside the
/// crop windows are zero.
RasterImage reembed(const PreprocessedImage& pre);

/// Non-overlapping row-major patches of side `patch`; partial patches at the
/// right and bottom edges are dropped.
std::vector<RasterImage> extract_patches(const PreprocessedImage& pre, int patch);

/// Preprocessed pixels over sensor pixels.
double pixel_budget_ratio(const PreprocessedImage& pre);

}  // namespace plenopress
