#include "doctest.h"
#include "plenopress/error.hpp"
#include "plenopress/metrics.hpp"
#include "plenopress/render.hpp"
#include "plenopress/synth.hpp"

using namespace plenopress;

namespace {

CameraSpec toy_spec() {
    return CameraSpec::with_default_pitch(100, 96, 12.0, 0.8, {14.3, 13.6}, 4, 3);
}

RenderConfig config(int V, int p, int s) {
    RenderConfig cfg;
    cfg.views_per_side = V;
    cfg.patch_size = p;
    cfg.view_step = s;
    return cfg;
}

}  // namespace

TEST_CASE("constant plenoptic image renders constant views") {
    const auto spec = toy_spec();
    SynthOptions opts;
    opts.scene = SynthScene::Constant;
    opts.constant_color = {50, 100, 150};
    const auto grid = render_views(synth_plenoptic(spec, opts), spec, 14, config(3, 4, 2));
    REQUIRE(grid.views.size() == 9);
    RasterImage expected(4 * 4, 3 * 4);
    expected.fill(50, 100, 150);
    for (const auto& v : grid.views) CHECK(v == expected);
}

TEST_CASE("uniform microimages make every view the index mosaic") {
    const auto spec = toy_spec();
    const int d = 14;
    PreprocessedImage pre;
    pre.crop_size = d;
    pre.grid_rows = spec.complete_rows;
    pre.grid_cols = spec.complete_cols;
    pre.source_spec = spec;
    pre.image = RasterImage(spec.complete_cols * d, spec.complete_rows * d);
    RasterImage mosaic(spec.complete_cols * 4, spec.complete_rows * 4);
    for (int r = 0; r < spec.complete_rows; ++r)
        for (int c = 0; c < spec.complete_cols; ++c) {
            const std::uint8_t color[3] = {static_cast<std::uint8_t>(10 * r), static_cast<std::uint8_t>(20 * c), 99};
            for (int y = 0; y < d; ++y)
                for (int x = 0; x < d; ++x)
                    for (int ch = 0; ch < 3; ++ch) pre.image.at(c * d + x, r * d + y, ch) = color[ch];
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    for (int ch = 0; ch < 3; ++ch) mosaic.at(c * 4 + x, r * 4 + y, ch) = color[ch];
        }
    const auto grid = render_views(pre, config(3, 4, 1));
    for (const auto& v : grid.views) CHECK(v == mosaic);
}

TEST_CASE("central view does not depend on the view step") {
    const auto spec = toy_spec();
    SynthOptions opts;
    const auto raw = synth_plenoptic(spec, opts);
    const auto a = render_views(raw, spec, 14, config(5, 4, 2));
    const auto b = render_views(raw, spec, 14, config(5, 4, 0));
    CHECK(a.at(2, 2) == b.at(2, 2));
    CHECK(a.at(0, 0) != b.at(0, 0));
}

TEST_CASE("render rejects even V and windows escaping the crop") {
    const auto spec = toy_spec();
    const auto raw = synth_plenoptic(spec, SynthOptions{});
    CHECK_THROWS_AS(render_views(raw, spec, 14, config(4, 4, 1)), ContractError);
    CHECK_THROWS_AS(render_views(raw, spec, 14, config(5, 12, 1)), ContractError);  // 12 + 4 > 14
    CHECK_NOTHROW(render_views(raw, spec, 14, config(5, 10, 1)));                   // 10 + 4 = 14
}

TEST_CASE("preprocessed and raw rendering agree whenever the window fits in d") {
    const auto spec = toy_spec();
    for (auto scene : {SynthScene::Gradient, SynthScene::Textured}) {
        SynthOptions opts;
        opts.scene = scene;
        opts.seed = 21;
        const auto raw = synth_plenoptic(spec, opts);
        const auto cfg = config(3, 6, 2);  // extent 10
        const auto reference = render_views(raw, spec, 22, cfg);
        for (int d : {14, 16, 18}) {
            const auto pre = crop_and_align(raw, spec, d);
            const auto from_pre = render_views(pre, cfg);
            const auto from_reembedded = render_views(reembed(pre), spec, 22, cfg);
            CHECK(view_pair_distortion(reference, from_pre, DistortionMetric::Mse) == 0.0);
            CHECK(view_pair_distortion(reference, from_reembedded, DistortionMetric::Mse) == 0.0);
        }
        // Window extent exactly d is still lossless; one step wider is not.
        const auto exact = config(3, 10, 2);
        const auto ref_exact = render_views(raw, spec, 22, exact);
        const auto same = render_views(reembed(crop_and_align(raw, spec, 14)), spec, 22, exact);
        CHECK(view_pair_distortion(ref_exact, same, DistortionMetric::Mse) == 0.0);
        const auto too_wide = config(3, 12, 2);  // extent 16 > 14
        const auto ref_too_wide = render_views(raw, spec, 22, too_wide);
        const auto broken = render_views(reembed(crop_and_align(raw, spec, 14)), spec, 22, too_wide);
        CHECK(view_pair_distortion(ref_too_wide, broken, DistortionMetric::Mse) > 0.0);
    }
}

TEST_CASE("shifting microimage contents by one pixel equals stepping one view") {
    const auto spec = toy_spec();
    SynthOptions opts;
    opts.scene = SynthScene::Textured;
    opts.seed = 4;
    const auto base = render_views(synth_plenoptic(spec, opts), spec, 14, config(3, 4, 1));
    opts.scene_offset_x = 1;
    const auto shifted = render_views(synth_plenoptic(spec, opts), spec, 14, config(3, 4, 1));
    CHECK(shifted.at(1, 1) == base.at(1, 2));
    opts.scene_offset_x = 0;
    opts.scene_offset_y = 1;
    const auto down = render_views(synth_plenoptic(spec, opts), spec, 14, config(3, 4, 1));
    CHECK(down.at(1, 1) == base.at(2, 1));
}

TEST_CASE("flip rotates each patch by 180 degrees") {
    const auto spec = toy_spec();
    const auto raw = synth_plenoptic(spec, SynthOptions{});
    auto cfg = config(3, 4, 1);
    const auto plain = render_views(raw, spec, 14, cfg);
    cfg.flip_patches = true;
    const auto flipped = render_views(raw, spec, 14, cfg);
    const auto& a = plain.at(0, 2);
    const auto& b = flipped.at(0, 2);
    for (int r = 0; r < spec.complete_rows; ++r)
        for (int c = 0; c < spec.complete_cols; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    REQUIRE(b.at(c * 4 + x, r * 4 + y, 1) == a.at(c * 4 + 3 - x, r * 4 + 3 - y, 1));
}

TEST_CASE("resampling to target dimensions") {
    const auto spec = toy_spec();
    const auto raw = synth_plenoptic(spec, SynthOptions{});
    auto cfg = config(3, 4, 1);
    cfg.target_width = 37;
    cfg.target_height = 23;
    const auto grid = render_views(raw, spec, 14, cfg);
    CHECK(grid.at(0, 0).width() == 37);
    CHECK(grid.at(0, 0).height() == 23);

    RasterImage small(2, 2);
    small.at(1, 0, 0) = 200;
    const auto up = resize_image(small, 4, 4, Resample::Nearest);
    CHECK(up.at(2, 0, 0) == 200);
    CHECK(up.at(3, 1, 0) == 200);
    CHECK(up.at(1, 1, 0) == 0);
    RasterImage flat(5, 5, 77);
    CHECK(resize_image(flat, 9, 3, Resample::Bilinear) == RasterImage(9, 3, 77));
}

TEST_CASE("rendering is independent of thread count") {
    const auto spec = toy_spec();
    const auto raw = synth_plenoptic(spec, SynthOptions{});
    const auto a = render_views(raw, spec, 14, config(5, 4, 1), 1);
    const auto b = render_views(raw, spec, 14, config(5, 4, 1), 7);
    for (std::size_t k = 0; k < a.views.size(); ++k) CHECK(a.views[k] == b.views[k]);
}

TEST_CASE("view-averaged distortion") {
    RasterImage a(8, 6, 0), b = a;
    ViewGrid ga{3, std::vector<RasterImage>(9, a)};
    ViewGrid gb = ga;
    CHECK(view_pair_distortion(ga, gb, DistortionMetric::Mse) == 0.0);
    CHECK(view_pair_distortion(ga, gb, DistortionMetric::Psnr) == kPsnrIdentical);

    // One view, one pixel, one channel off by 255.
    gb.at(1, 2).at(3, 4, 1) = 255;
    const double expected = 255.0 * 255.0 / (9.0 * 8 * 6 * 3);
    CHECK(view_pair_distortion(ga, gb, DistortionMetric::Mse) == doctest::Approx(expected).epsilon(1e-12));

    // V = 1 reduces to the single-image metric; V^2 copies average to the same value.
    b.at(0, 0, 0) = 50;
    b.at(5, 3, 2) = 9;
    ViewGrid one_a{1, {a}}, one_b{1, {b}};
    CHECK(view_pair_distortion(one_a, one_b, DistortionMetric::Psnr) == psnr(a, b));
    ViewGrid many_a{5, std::vector<RasterImage>(25, a)}, many_b{5, std::vector<RasterImage>(25, b)};
    CHECK(view_pair_distortion(many_a, many_b, DistortionMetric::Psnr) == doctest::Approx(psnr(a, b)).epsilon(1e-12));

    ViewGrid wrong{1, {a}};
    CHECK_THROWS_AS(view_pair_distortion(ga, wrong, DistortionMetric::Mse), ContractError);
}
