#include "plenopress/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plenopress/parallel.hpp"

namespace plenopress {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, long long ix, long long iy, int channel) {
    std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x100000001B3ull));
    h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
    h = splitmix64(h + static_cast<std::uint64_t>(channel));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y, int channel) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<long long>(fx), iy = static_cast<long long>(fy);
    double tx = x - fx, ty = y - fy;
    tx = tx * tx * (3 - 2 * tx);
    ty = ty * ty * (3 - 2 * ty);
    const double a = lattice_value(seed, ix, iy, channel), b = lattice_value(seed, ix + 1, iy, channel);
    const double c = lattice_value(seed, ix, iy + 1, channel), d = lattice_value(seed, ix + 1, iy + 1, channel);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

std::uint8_t wrap8(long long v) { return static_cast<std::uint8_t>(((v % 256) + 256) % 256); }

}  // namespace

std::array<std::uint8_t, 3> scene_sample(const SynthOptions& opts, long long sx, long long sy) {
    switch (opts.scene) {
        case SynthScene::Constant: return opts.constant_color;
        case SynthScene::Gradient: return {wrap8(2 * sx + 16), wrap8(2 * sy + 64), wrap8(sx + sy + 128)};
        case SynthScene::Textured: break;
    }
    std::array<std::uint8_t, 3> rgb{};
    for (int ch = 0; ch < 3; ++ch) {
        double v = 0.0, amplitude = 0.5, period = 24.0;
        for (int octave = 0; octave < 4; ++octave) {
            v += amplitude * value_noise(opts.seed + octave, sx / period, sy / period, ch);
            amplitude *= 0.5;
            period *= 0.5;
        }
        rgb[ch] = static_cast<std::uint8_t>(std::clamp(std::round(v / 0.9375 * 255.0), 0.0, 255.0));
    }
    return rgb;
}

RasterImage synth_plenoptic(const CameraSpec& spec, const SynthOptions& opts, unsigned threads) {
    spec.validate();
    RasterImage image(spec.sensor_width, spec.sensor_height);
    const double r = spec.microlens_radius;
    const double epa = spec.epa_coefficient * r;
    const int reach_cols = static_cast<int>(std::ceil(r / spec.hex_horizontal_pitch)) + 1;
    const int reach_rows = static_cast<int>(std::ceil(r / spec.hex_vertical_pitch)) + 1;
    parallel_for(static_cast<std::size_t>(spec.sensor_height), threads, [&](std::size_t row_index) {
        const int y = static_cast<int>(row_index);
        for (int x = 0; x < spec.sensor_width; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            // Nearest lattice lens whose disc contains the pixel center.
            double best = std::numeric_limits<double>::infinity();
            int best_row = 0, best_col = 0;
            Point2 best_center;
            const int c0 = static_cast<int>(std::floor((px - spec.grid_origin.x) / spec.hex_horizontal_pitch));
            for (int col = c0 - reach_cols + 1; col <= c0 + reach_cols; ++col) {
                const int r0 = static_cast<int>(
                    std::floor((py - spec.lattice_center(0, col).y) / spec.hex_vertical_pitch));
                for (int row = r0 - reach_rows + 1; row <= r0 + reach_rows; ++row) {
                    const auto c = spec.lattice_center(row, col);
                    const double d2 = (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y);
                    if (d2 < r * r && d2 < best) {
                        best = d2;
                        best_row = row;
                        best_col = col;
                        best_center = c;
                    }
                }
            }
            if (!std::isfinite(best)) continue;
            const long long sx = x - static_cast<long long>(std::floor(best_center.x)) +
                                 static_cast<long long>(opts.parallax_step) * best_col + opts.scene_offset_x;
            const long long sy = y - static_cast<long long>(std::floor(best_center.y)) +
                                 static_cast<long long>(opts.parallax_step) * best_row + opts.scene_offset_y;
            const auto rgb = scene_sample(opts, sx, sy);
            const double rho = std::sqrt(best);
            double gain = 1.0;
            if (rho >= epa && r > epa) gain = 1.0 - (1.0 - opts.rim_brightness) * (rho - epa) / (r - epa);
            for (int ch = 0; ch < 3; ++ch)
                image.at(x, y, ch) = gain == 1.0 ? rgb[ch]
                                                 : static_cast<std::uint8_t>(std::round(rgb[ch] * gain));
        }
    });
    return image;
}

}  // namespace plenopress
