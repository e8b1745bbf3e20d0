#include "plenopress/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "plenopress/error.hpp"
#include "plenopress/keyvalue.hpp"
#include "plenopress/parallel.hpp"

namespace plenopress {

int window_origin(double center, double size) {
    return static_cast<int>(std::ceil(center - size / 2.0 - 0.5));
}

RasterImage devignette(const RasterImage& raw, const RasterImage& white, double floor_fraction) {
    if (raw.width() != white.width() || raw.height() != white.height())
        throw ContractError("devignette: raw and white images differ in size");
    if (!(floor_fraction > 0.0 && floor_fraction < 1.0))
        throw ContractError("devignette: floor must lie in (0, 1)");
    int maxw[RasterImage::kChannels] = {};
    for (int y = 0; y < white.height(); ++y)
        for (int x = 0; x < white.width(); ++x)
            for (int ch = 0; ch < RasterImage::kChannels; ++ch) maxw[ch] = std::max<int>(maxw[ch], white.at(x, y, ch));
    if (*std::max_element(std::begin(maxw), std::end(maxw)) == 0)
        throw ContractError("devignette: white image is all zero");

    RasterImage out(raw.width(), raw.height());
    for (int y = 0; y < raw.height(); ++y) {
        for (int x = 0; x < raw.width(); ++x) {
            for (int ch = 0; ch < RasterImage::kChannels; ++ch) {
                if (maxw[ch] == 0) continue;
                const double denom = std::max<double>(white.at(x, y, ch), floor_fraction * maxw[ch]);
                const double v = std::round(raw.at(x, y, ch) * maxw[ch] / denom);
                out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return out;
}

PreprocessedImage crop_and_align(const RasterImage& source, const CameraSpec& spec, int crop_size,
                                 unsigned threads) {
    spec.validate();
    if (source.width() != spec.sensor_width || source.height() != spec.sensor_height)
        throw ContractError("crop_and_align: source is " + std::to_string(source.width()) + "x" +
                            std::to_string(source.height()) + " but the camera sensor is " +
                            std::to_string(spec.sensor_width) + "x" + std::to_string(spec.sensor_height));
    if (crop_size <= 0 || crop_size % 2 != 0)
        throw ContractError("crop_and_align: crop size must be a positive even integer");
    const double d_min = min_crop_size(spec.epa_coefficient, spec.microlens_radius);
    if (crop_size < std::ceil(d_min))
        throw ContractError("crop_and_align: crop size " + std::to_string(crop_size) +
                            " is below the minimum inscribed square " + std::to_string(d_min));

    const auto centers = derive_centers(spec);
    for (const auto& c : centers) {
        const int x0 = window_origin(c.center.x, crop_size);
        const int y0 = window_origin(c.center.y, crop_size);
        if (x0 < 0 || y0 < 0 || x0 + crop_size > spec.sensor_width || y0 + crop_size > spec.sensor_height)
            throw ContractError("crop_and_align: crop window of microlens (" + std::to_string(c.row) + "," +
                                std::to_string(c.col) + ") leaves the sensor");
    }

    PreprocessedImage pre;
    pre.crop_size = crop_size;
    pre.grid_rows = spec.complete_rows;
    pre.grid_cols = spec.complete_cols;
    pre.source_spec = spec;
    pre.image = RasterImage(spec.complete_cols * crop_size, spec.complete_rows * crop_size);
    parallel_for(centers.size(), threads, [&](std::size_t i) {
        const auto& c = centers[i];
        pre.image.blit(source, window_origin(c.center.x, crop_size), window_origin(c.center.y, crop_size),
                       crop_size, crop_size, c.col * crop_size, c.row * crop_size);
    });
    return pre;
}

RasterImage reembed(const PreprocessedImage& pre) {
    const auto& spec = pre.source_spec;
    const int d = pre.crop_size;
    if (pre.image.width() != pre.grid_cols * d || pre.image.height() != pre.grid_rows * d)
        throw ContractError("reembed: image size does not match grid and crop size");
    RasterImage raw(spec.sensor_width, spec.sensor_height);
    for (const auto& c : derive_centers(spec)) {
        raw.blit(pre.image, c.col * d, c.row * d, d, d, window_origin(c.center.x, d),
                 window_origin(c.center.y, d));
    }
    return raw;
}

std::vector<RasterImage> extract_patches(const PreprocessedImage& pre, int patch) {
    if (patch <= 0 || pre.crop_size <= 0 || patch % pre.crop_size != 0)
        throw ContractError("extract_patches: patch size must be a positive multiple of the crop size");
    std::vector<RasterImage> patches;
    const int cols = pre.image.width() / patch;
    const int rows = pre.image.height() / patch;
    patches.reserve(static_cast<std::size_t>(cols) * rows);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            RasterImage p(patch, patch);
            p.blit(pre.image, c * patch, r * patch, patch, patch, 0, 0);
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

double pixel_budget_ratio(const PreprocessedImage& pre) {
    return static_cast<double>(pre.image.pixel_count()) / static_cast<double>(pre.source_spec.sensor_pixels());
}

void PreprocessedImage::save_sidecar(const std::filesystem::path& path,
                                     const std::filesystem::path& image_name) const {
    KeyValueFile kv;
    if (!image_name.empty()) kv.set("image", image_name.string());
    kv.set("crop_size", static_cast<long long>(crop_size));
    kv.set("grid_rows", static_cast<long long>(grid_rows));
    kv.set("grid_cols", static_cast<long long>(grid_cols));
    kv.set("width", static_cast<long long>(image.width()));
    kv.set("height", static_cast<long long>(image.height()));
    for (const auto& [key, value] : source_spec.to_config().entries()) kv.set("spec." + key, value);
    kv.save(path);
}

PreprocessedImage PreprocessedImage::load(const std::filesystem::path& sidecar_path,
                                          const std::filesystem::path& image_path) {
    auto kv = KeyValueFile::load(sidecar_path);
    KeyValueFile spec_kv;
    for (const auto& [key, value] : kv.entries())
        if (key.rfind("spec.", 0) == 0) spec_kv.set(key.substr(5), value);
    PreprocessedImage pre;
    pre.source_spec = CameraSpec::from_config(spec_kv);
    pre.crop_size = static_cast<int>(kv.get_int("crop_size"));
    pre.grid_rows = static_cast<int>(kv.get_int("grid_rows"));
    pre.grid_cols = static_cast<int>(kv.get_int("grid_cols"));
    auto path = image_path;
    if (path.empty()) path = sidecar_path.parent_path() / kv.get_string("image");
    pre.image = read_image(path);
    if (pre.image.width() != pre.grid_cols * pre.crop_size || pre.image.height() != pre.grid_rows * pre.crop_size)
        throw ContractError(path.string() + ": image size does not match its sidecar grid");
    return pre;
}

}  // namespace plenopress
