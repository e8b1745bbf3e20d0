#pragma once

#include <array>
#include <cstdint>

#include "plenopress/camera_geometry.hpp"
#include "plenopress/image.hpp"

namespace plenopress {

enum class SynthScene { Constant, Gradient, Textured };

struct SynthOptions {
    SynthScene scene = SynthScene::Textured;
    std::array<std::uint8_t, 3> constant_color = {128, 128, 128};
    /// Scene shift in pixels per microimage row/column index.
    int parallax_step = 2;
    /// Global scene translation, applied to every microimage alike.
    int scene_offset_x = 0;
    int scene_offset_y = 0;
    /// Brightness left at the lens rim, relative to the EPA interior.
    double rim_brightness = 0.25;
    std::uint64_t seed = 1;
};

/// Procedural scene value at integer scene coordinates.
std::array<std::uint8_t, 3> scene_sample(const SynthOptions& opts, long long sx, long long sy);

/// Synthetic raw plenoptic image. Every lattice microimage (complete or not)
/// shows the scene sampled at (x - floor(cx) + s col + offset_x, ...),
/// full brightness inside the EPA disc, a linear radial falloff to
/// `rim_brightness` at radius R and black between microimages.
RasterImage synth_plenoptic(const CameraSpec& spec, const SynthOptions& opts, unsigned threads = 0);

}  // namespace plenopress
