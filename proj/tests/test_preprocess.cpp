#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "plenopress/error.hpp"
#include "plenopress/preprocess.hpp"
#include "plenopress/synth.hpp"

using namespace plenopress;

namespace {

CameraSpec toy_spec() {
    // 2x2 complete lenses, R = 12, m = 0.8: d_min = 13.58.
    return CameraSpec::with_default_pitch(64, 72, 12.0, 0.8, {14.3, 13.6}, 2, 2);
}

}  // namespace

TEST_CASE("window origin rounds half toward negative infinity") {
    CHECK(window_origin(24.0, 48) == 0);
    CHECK(window_origin(24.5, 48) == 0);   // tie: 0.5 -> 0
    CHECK(window_origin(24.51, 48) == 1);
    CHECK(window_origin(23.5, 48) == -1);  // tie: -0.5 -> -1
    CHECK(window_origin(10.2, 7) == 7);    // 6.7 -> 7
}

TEST_CASE("devignette identities") {
    RasterImage raw(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
            for (int ch = 0; ch < 3; ++ch) raw.at(x, y, ch) = static_cast<std::uint8_t>(20 * x + 7 * y + 30 * ch);

    SUBCASE("uniform white at its own maximum leaves the image unchanged") {
        RasterImage white(4, 3, 180);
        CHECK(devignette(raw, white, 0.1) == raw);
    }
    SUBCASE("raw equal to a non-uniform white becomes uniform at the white maximum") {
        RasterImage white(4, 3);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x)
                white.at(x, y, 0) = white.at(x, y, 1) = white.at(x, y, 2) = static_cast<std::uint8_t>(120 + 10 * x + 5 * y);
        const auto out = devignette(white, white, 0.2);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x)
                for (int ch = 0; ch < 3; ++ch) CHECK(out.at(x, y, ch) == 120 + 30 + 10);
    }
    SUBCASE("white below the floor divides by the floor") {
        RasterImage white(4, 3, 10);
        white.at(0, 0, 0) = white.at(0, 0, 1) = white.at(0, 0, 2) = 200;
        const double floor = 0.4;
        const auto out = devignette(raw, white, floor);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 4; ++x) {
                if (x == 0 && y == 0) continue;
                for (int ch = 0; ch < 3; ++ch) {
                    const double expected = std::min(255.0, std::round(raw.at(x, y, ch) / floor));
                    CHECK(out.at(x, y, ch) == expected);
                }
            }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(devignette(raw, RasterImage(3, 3, 1), 0.1), ContractError);
        CHECK_THROWS_AS(devignette(raw, RasterImage(4, 3, 0), 0.1), ContractError);
        CHECK_THROWS_AS(devignette(raw, RasterImage(4, 3, 9), 1.0), ContractError);
    }
}

TEST_CASE("canonical TSPC crop with d = 48 yields 3168x2016") {
    const auto spec = CameraSpec::tspc();
    const RasterImage raw(spec.sensor_width, spec.sensor_height, 200);
    const auto pre = crop_and_align(raw, spec, 48);
    CHECK(pre.image.width() == 3168);
    CHECK(pre.image.height() == 2016);
    CHECK(pre.grid_cols == 66);
    CHECK(pre.grid_rows == 42);
    // Ratio against 4080x3068: 1 - 48.98% discarded.
    CHECK(pixel_budget_ratio(pre) == doctest::Approx(0.5102).epsilon(0.005));

    const auto back = reembed(pre);
    std::size_t nonzero = 0;
    for (int y = 0; y < back.height(); ++y)
        for (int x = 0; x < back.width(); ++x) nonzero += back.at(x, y, 0) != 0;
    CHECK(nonzero == 2772u * 48u * 48u);

    const auto patches = extract_patches(pre, 384);
    CHECK(patches.size() == 40);
}

TEST_CASE("constant source gives a constant preprocessed image") {
    const auto spec = toy_spec();
    RasterImage raw(spec.sensor_width, spec.sensor_height);
    raw.fill(11, 22, 33);
    const auto pre = crop_and_align(raw, spec, 16);
    CHECK(pre.image.width() == 32);
    CHECK(pre.image.height() == 32);
    RasterImage expected(32, 32);
    expected.fill(11, 22, 33);
    CHECK(pre.image == expected);
}

TEST_CASE("tile (r, c) holds the window centered on microlens (r, c)") {
    const auto spec = toy_spec();
    const int d = 16;
    RasterImage raw(spec.sensor_width, spec.sensor_height);
    for (const auto& c : derive_centers(spec)) {
        const int x0 = window_origin(c.center.x, d), y0 = window_origin(c.center.y, d);
        for (int y = y0; y < y0 + d; ++y)
            for (int x = x0; x < x0 + d; ++x) {
                raw.at(x, y, 0) = static_cast<std::uint8_t>(40 + c.row);
                raw.at(x, y, 1) = static_cast<std::uint8_t>(90 + c.col);
                raw.at(x, y, 2) = 7;
            }
    }
    const auto pre = crop_and_align(raw, spec, d);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < d; ++y)
                for (int x = 0; x < d; ++x) {
                    REQUIRE(pre.image.at(c * d + x, r * d + y, 0) == 40 + r);
                    REQUIRE(pre.image.at(c * d + x, r * d + y, 1) == 90 + c);
                }
}

TEST_CASE("reembed then crop round-trips bit-exactly") {
    const auto spec = toy_spec();
    SynthOptions opts;
    opts.seed = 5;
    const auto raw = synth_plenoptic(spec, opts);
    const auto pre = crop_and_align(raw, spec, 16);
    const auto again = crop_and_align(reembed(pre), spec, 16);
    CHECK(again.image == pre.image);

    PreprocessedImage zero = pre;
    zero.image = RasterImage(pre.image.width(), pre.image.height());
    CHECK(reembed(zero) == RasterImage(spec.sensor_width, spec.sensor_height));
}

TEST_CASE("crop contract violations") {
    const auto spec = toy_spec();
    const RasterImage raw(spec.sensor_width, spec.sensor_height);
    CHECK_THROWS_AS(crop_and_align(raw, spec, 15), ContractError);   // odd
    CHECK_THROWS_AS(crop_and_align(raw, spec, 12), ContractError);   // below ceil(d_min) = 14
    CHECK_NOTHROW(crop_and_align(raw, spec, 14));
    CHECK_THROWS_AS(crop_and_align(raw, spec, 30), ContractError);   // leaves the sensor
    CHECK_THROWS_AS(crop_and_align(RasterImage(10, 10), spec, 16), ContractError);
}

TEST_CASE("extract_patches tiles whole microimage blocks") {
    const auto spec = toy_spec();
    SynthOptions opts;
    const auto pre = crop_and_align(synth_plenoptic(spec, opts), spec, 16);
    const auto one = extract_patches(pre, 32);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == pre.image);
    const auto four = extract_patches(pre, 16);
    REQUIRE(four.size() == 4);
    RasterImage tile(16, 16);
    tile.blit(pre.image, 16, 16, 16, 16, 0, 0);
    CHECK(four[3] == tile);
    CHECK_THROWS_AS(extract_patches(pre, 24), ContractError);

    // 3168x2016 at 384: 8 columns x 5 rows, each spanning 8x8 microimages of d = 48.
    PreprocessedImage big;
    big.crop_size = 48;
    big.grid_cols = 66;
    big.grid_rows = 42;
    big.image = RasterImage(3168, 2016);
    for (int y = 0; y < 2016; ++y)
        for (int x = 0; x < 3168; ++x) big.image.at(x, y, 0) = static_cast<std::uint8_t>((x / 48) + 66 * 0);
    const auto patches = extract_patches(big, 384);
    CHECK(patches.size() == 40);
    CHECK(patches[1].at(0, 0, 0) == 8);
    CHECK(patches[1].at(383, 0, 0) == 15);
}

TEST_CASE("sidecar round trip and thread-count independence") {
    const auto spec = toy_spec();
    SynthOptions opts;
    opts.seed = 9;
    const auto raw = synth_plenoptic(spec, opts);
    const auto a = crop_and_align(raw, spec, 16, 1);
    const auto b = crop_and_align(raw, spec, 16, 4);
    CHECK(a.image == b.image);

    const auto dir = std::filesystem::temp_directory_path() / "plenopress_test_sidecar";
    std::filesystem::create_directories(dir);
    write_png(a.image, dir / "pre.png");
    a.save_sidecar(dir / "pre.cfg", "pre.png");
    const auto loaded = PreprocessedImage::load(dir / "pre.cfg");
    CHECK(loaded.image == a.image);
    CHECK(loaded.crop_size == 16);
    CHECK(loaded.source_spec.grid_origin.x == spec.grid_origin.x);
    CHECK(loaded.source_spec.hex_horizontal_pitch == spec.hex_horizontal_pitch);
    std::filesystem::remove_all(dir);
}
