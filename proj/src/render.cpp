#include "plenopress/render.hpp"

#include <algorithm>
#include <cmath>

#include "plenopress/error.hpp"
#include "plenopress/keyvalue.hpp"
#include "plenopress/metrics.hpp"
#include "plenopress/parallel.hpp"

namespace plenopress {

void RenderConfig::validate() const {
    if (views_per_side < 1 || views_per_side % 2 == 0)
        throw ContractError("render: views per side must be odd and >= 1");
    if (patch_size < 1) throw ContractError("render: patch size must be >= 1");
    if (view_step < 0) throw ContractError("render: view step must be >= 0");
    if (target_width.has_value() != target_height.has_value())
        throw ContractError("render: target width and height must be given together");
    if (target_width && (*target_width < 1 || *target_height < 1))
        throw ContractError("render: target size must be positive");
}

namespace {

void copy_patch(const RasterImage& src, int sx, int sy, int p, bool flip, RasterImage& dst, int dx, int dy) {
    if (!flip) {
        dst.blit(src, sx, sy, p, p, dx, dy);
        return;
    }
    for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
            for (int ch = 0; ch < RasterImage::kChannels; ++ch)
                dst.at(dx + x, dy + y, ch) = src.at(sx + p - 1 - x, sy + p - 1 - y, ch);
}

}  // namespace

ViewGrid render_views(const PreprocessedImage& pre, const RenderConfig& cfg, unsigned threads) {
    cfg.validate();
    const int d = pre.crop_size;
    const int p = cfg.patch_size;
    const int V = cfg.views_per_side;
    const int center = V / 2;
    const auto centers = derive_centers(pre.source_spec);

    // Window offsets inside each tile, resolved once per (view, microimage)
    // in sensor coordinates so raw and preprocessed inputs sample the same pixels.
    struct Placement {
        int tile_x, tile_y;
    };
    const std::size_t view_count = static_cast<std::size_t>(V) * V;
    std::vector<Placement> placements(view_count * centers.size());
    for (int i = 0; i < V; ++i) {
        for (int j = 0; j < V; ++j) {
            const double ox = (j - center) * static_cast<double>(cfg.view_step);
            const double oy = (i - center) * static_cast<double>(cfg.view_step);
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const auto& c = centers[k].center;
                const int tx = window_origin(c.x + ox, p) - window_origin(c.x, d);
                const int ty = window_origin(c.y + oy, p) - window_origin(c.y, d);
                if (tx < 0 || ty < 0 || tx + p > d || ty + p > d)
                    throw ContractError("render: view (" + std::to_string(i) + "," + std::to_string(j) +
                                        ") window escapes the " + std::to_string(d) + "x" + std::to_string(d) +
                                        " crop square (p + (V-1)s = " + std::to_string(cfg.window_extent()) + ")");
                placements[(static_cast<std::size_t>(i) * V + j) * centers.size() + k] = {tx, ty};
            }
        }
    }

    ViewGrid grid;
    grid.views_per_side = V;
    grid.views.resize(view_count);
    parallel_for(view_count, threads, [&](std::size_t v) {
        RasterImage view(pre.grid_cols * p, pre.grid_rows * p);
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const auto& c = centers[k];
            const auto& pl = placements[v * centers.size() + k];
            copy_patch(pre.image, c.col * d + pl.tile_x, c.row * d + pl.tile_y, p, cfg.flip_patches, view,
                       c.col * p, c.row * p);
        }
        if (cfg.target_width) view = resize_image(view, *cfg.target_width, *cfg.target_height, cfg.resample);
        grid.views[v] = std::move(view);
    });
    return grid;
}

ViewGrid render_views(const RasterImage& raw, const CameraSpec& spec, int crop_size, const RenderConfig& cfg,
                      unsigned threads) {
    return render_views(crop_and_align(raw, spec, crop_size, threads), cfg, threads);
}

RasterImage resize_image(const RasterImage& src, int width, int height, Resample mode) {
    if (width < 1 || height < 1) throw ContractError("resize: target size must be positive");
    if (src.empty()) throw ContractError("resize: empty source image");
    if (width == src.width() && height == src.height()) return src;
    RasterImage out(width, height);
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
            if (mode == Resample::Nearest) {
                const int nx = std::min(static_cast<int>((x + 0.5) * sx), src.width() - 1);
                const int ny = std::min(static_cast<int>((y + 0.5) * sy), src.height() - 1);
                for (int ch = 0; ch < RasterImage::kChannels; ++ch) out.at(x, y, ch) = src.at(nx, ny, ch);
                continue;
            }
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const int x1 = std::min(x0 + 1, src.width() - 1), y1 = std::min(y0 + 1, src.height() - 1);
            const double ax = fx - x0, ay = fy - y0;
            for (int ch = 0; ch < RasterImage::kChannels; ++ch) {
                const double top = src.at(x0, y0, ch) * (1 - ax) + src.at(x1, y0, ch) * ax;
                const double bottom = src.at(x0, y1, ch) * (1 - ax) + src.at(x1, y1, ch) * ax;
                out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::round(top * (1 - ay) + bottom * ay), 0.0, 255.0));
            }
        }
    }
    return out;
}

double view_pair_distortion(const ViewGrid& a, const ViewGrid& b, DistortionMetric metric) {
    if (a.views_per_side != b.views_per_side || a.views.size() != b.views.size() || a.views.empty())
        throw ContractError("view distortion: view grids differ in shape");
    double sum = 0.0;
    for (std::size_t k = 0; k < a.views.size(); ++k) {
        switch (metric) {
            case DistortionMetric::Mse: sum += mse(a.views[k], b.views[k]); break;
            case DistortionMetric::Psnr: sum += psnr(a.views[k], b.views[k]); break;
            case DistortionMetric::MsSsim: sum += ms_ssim(a.views[k], b.views[k]); break;
        }
    }
    return sum / static_cast<double>(a.views.size());
}

void ViewGrid::save(const std::filesystem::path& dir, const RenderConfig& cfg) const {
    std::filesystem::create_directories(dir);
    KeyValueFile index;
    index.set("views_per_side", static_cast<long long>(views_per_side));
    index.set("view_width", static_cast<long long>(views.empty() ? 0 : views.front().width()));
    index.set("view_height", static_cast<long long>(views.empty() ? 0 : views.front().height()));
    index.set("patch_size", static_cast<long long>(cfg.patch_size));
    index.set("view_step", static_cast<long long>(cfg.view_step));
    index.set("flip_patches", static_cast<long long>(cfg.flip_patches ? 1 : 0));
    index.set("resample", std::string(cfg.resample == Resample::Nearest ? "nearest" : "bilinear"));
    for (int i = 0; i < views_per_side; ++i) {
        for (int j = 0; j < views_per_side; ++j) {
            const auto name = "view_" + std::to_string(i) + "_" + std::to_string(j) + ".png";
            write_png(at(i, j), dir / name);
            index.set("view." + std::to_string(i) + "." + std::to_string(j), name);
        }
    }
    index.save(dir / "index.cfg");
}

}  // namespace plenopress
