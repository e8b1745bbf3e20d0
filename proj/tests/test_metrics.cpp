#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "plenopress/error.hpp"
#include "plenopress/metrics.hpp"

using namespace plenopress;

namespace {

constexpr int kW = 200, kH = 180;

// Same formulas as the reference script that produced the frozen values
// below (tf.image.ssim_multiscale, max_val 255, on a single gray plane).
std::vector<double> textured() {
    std::vector<double> p(kW * kH);
    for (int y = 0; y < kH; ++y)
        for (int x = 0; x < kW; ++x) p[y * kW + x] = (x * 7 + y * 13 + ((x * y) % 17) * 5) % 256;
    return p;
}

double pattern_noise(int x, int y) { return ((x * 31 + y * 17) % 9) - 4; }

RasterImage gray_image(const std::vector<double>& plane) {
    RasterImage img(kW, kH);
    for (int y = 0; y < kH; ++y)
        for (int x = 0; x < kW; ++x) {
            const auto v = static_cast<std::uint8_t>(plane[y * kW + x]);
            img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
        }
    return img;
}

RdCurve curve(std::string label, std::vector<double> bpp, std::vector<double> q) {
    RdCurve c;
    c.label = std::move(label);
    for (std::size_t i = 0; i < bpp.size(); ++i) c.points.push_back({bpp[i], q[i], 0.9 + 0.01 * i});
    return c;
}

}  // namespace

TEST_CASE("psnr closed forms") {
    const RasterImage zero(16, 16, 0), full(16, 16, 255), sixteen(16, 16, 16);
    CHECK(psnr(zero, zero) == kPsnrIdentical);
    CHECK(psnr(zero, full) == doctest::Approx(0.0));
    CHECK(std::abs(psnr(zero, sixteen) - 24.0484) < 0.001);
    CHECK(psnr(zero, sixteen) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 256.0)));
    CHECK_THROWS_AS(psnr(zero, RasterImage(15, 16)), ContractError);
}

TEST_CASE("psnr decreases strictly with noise amplitude") {
    std::mt19937 rng(1);
    RasterImage base(64, 48);
    for (auto& s : base.samples()) s = static_cast<std::uint8_t>(64 + rng() % 128);
    double previous = kPsnrIdentical;
    for (int amplitude : {1, 2, 4, 8, 16, 32}) {
        RasterImage noisy = base;
        std::mt19937 noise_rng(99);
        for (auto& s : noisy.samples()) {
            const int sign = (noise_rng() & 1) ? 1 : -1;
            s = static_cast<std::uint8_t>(s + sign * amplitude);
        }
        const double value = psnr(base, noisy);
        CHECK(value < previous);
        previous = value;
    }
}

TEST_CASE("ms_ssim matches the reference implementation") {
    const auto a = textured();
    std::vector<double> inverted(a.size()), noisy(a.size()), smooth(a.size()), smooth_noisy(a.size());
    for (int y = 0; y < kH; ++y)
        for (int x = 0; x < kW; ++x) {
            const int i = y * kW + x;
            inverted[i] = 255 - a[i];
            noisy[i] = std::clamp(a[i] + pattern_noise(x, y), 0.0, 255.0);
            smooth[i] = std::round(128 + 100 * std::sin(x / 11.0) * std::cos(y / 7.0));
            smooth_noisy[i] = std::clamp(smooth[i] + 3 * pattern_noise(x, y), 0.0, 255.0);
        }
    CHECK(ms_ssim_plane(a, inverted, kW, kH) < 0.1);
    CHECK(ms_ssim_plane(a, inverted, kW, kH) == doctest::Approx(0.0));
    CHECK(ms_ssim_plane(a, noisy, kW, kH) == doctest::Approx(0.9998589158058167).epsilon(1e-5));
    CHECK(ms_ssim_plane(smooth, smooth_noisy, kW, kH) == doctest::Approx(0.9896403551101685).epsilon(1e-5));

    const auto ia = gray_image(a), inoisy = gray_image(noisy);
    CHECK(ms_ssim(ia, ia) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ms_ssim(ia, inoisy) == doctest::Approx(0.9998589158058167).epsilon(1e-5));
    CHECK(std::abs(ms_ssim(ia, inoisy) - ms_ssim(inoisy, ia)) < 1e-12);
}

TEST_CASE("ms_ssim tends to 1 as the perturbation shrinks") {
    const auto a = gray_image(textured());
    double previous = 0.0;
    for (int eps : {4, 2, 1}) {
        RasterImage b = a;
        for (int y = 0; y < kH; ++y)
            for (int x = 0; x < kW; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const int delta = ((x + y) % 2 == 0) ? eps : -eps;
                    b.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(a.at(x, y, ch) + delta, 0, 255));
                }
        const double value = ms_ssim(a, b);
        CHECK(value > previous);
        CHECK(value < 1.0);
        previous = value;
    }
    CHECK(previous > 0.999);
}

TEST_CASE("ms_ssim rejects images below 176 pixels") {
    const RasterImage small(175, 300), other(175, 300);
    CHECK_THROWS_AS(ms_ssim(small, other), ContractError);
    CHECK_NOTHROW(ms_ssim(RasterImage(176, 176, 3), RasterImage(176, 176, 3)));
}

TEST_CASE("bpp divides by the original sensor resolution") {
    const auto spec = CameraSpec::tspc();
    CHECK(bits_per_pixel(12517440.0, spec) == 1.0);
    CHECK(bits_per_pixel(0.0, spec) == 0.0);
    CHECK(std::abs(bits_per_pixel(751046.0, spec) - 0.06) < 1e-4);
    CHECK_THROWS_AS(bits_per_pixel(-1.0, spec), ContractError);
}

TEST_CASE("bd_rate closed forms") {
    const auto ref = curve("ref", {0.05, 0.1, 0.2, 0.4, 0.8}, {30.1, 32.4, 34.9, 37.0, 38.8});
    auto scaled = [&](double factor) {
        RdCurve c = ref;
        for (auto& p : c.points) p.bpp *= factor;
        return c;
    };
    CHECK(std::abs(bd_rate(ref, ref).percent) < 1e-9);
    CHECK(bd_rate(ref, scaled(2.0)).percent == doctest::Approx(100.0).epsilon(1e-3));
    CHECK(bd_rate(ref, scaled(0.5)).percent == doctest::Approx(-50.0).epsilon(2e-3));
    CHECK(std::abs(bd_rate(ref, scaled(2.0)).percent - 100.0) < 0.1);
    CHECK(std::abs(bd_rate(ref, scaled(0.5)).percent + 50.0) < 0.1);

    // Antisymmetry on a shared quality grid, using a non-uniform rate change.
    RdCurve other = ref;
    for (std::size_t i = 0; i < other.points.size(); ++i) other.points[i].bpp *= 0.7 + 0.1 * i;
    const double ab = bd_rate(ref, other).percent, ba = bd_rate(other, ref).percent;
    CHECK(std::abs((1 + ab / 100) * (1 + ba / 100) - 1.0) < 1e-6);

    CHECK(bd_rate(ref, scaled(2.0), QualityAxis::MsSsim).percent == doctest::Approx(100.0).epsilon(1e-3));
}

TEST_CASE("bd_rate edge cases") {
    const auto ref = curve("ref", {0.05, 0.1, 0.2, 0.4, 0.8}, {30.1, 32.4, 34.9, 37.0, 38.8});
    auto with_inf = ref;
    with_inf.points.push_back({1.6, kPsnrIdentical, 1.0});
    const auto r = bd_rate(ref, with_inf);
    CHECK(r.dropped_infinite_points);
    CHECK(std::abs(r.percent) < 1e-9);

    const auto disjoint = curve("far", {0.05, 0.1, 0.2, 0.4}, {40.0, 41.0, 42.0, 43.0});
    CHECK_THROWS_AS(bd_rate(ref, disjoint), ContractError);
    const auto short_curve = curve("short", {0.1, 0.2, 0.4}, {31, 33, 35});
    CHECK_THROWS_AS(bd_rate(ref, short_curve), ContractError);
    auto unsorted = ref;
    std::swap(unsorted.points[0], unsorted.points[1]);
    CHECK_THROWS_AS(bd_rate(ref, unsorted), ContractError);

    auto wiggly = curve("wiggly", {0.05, 0.1, 0.2, 0.4, 0.8}, {30.1, 36.0, 33.0, 37.0, 38.8});
    const auto w = bd_rate(ref, wiggly);
    CHECK(w.quality_not_increasing);
    CHECK(w.non_monotonic_fit);
}

TEST_CASE("RD CSV round trip") {
    const auto path = std::filesystem::temp_directory_path() / "plenopress_rd.csv";
    std::filesystem::remove(path);
    const auto ref = curve("ours", {0.05, 0.1, 0.2, 0.4}, {30.1, 32.4, 34.9, 37.0});
    write_rd_csv({ref}, path);
    append_rd_row("anchor", {0.3, kPsnrIdentical, 1.0}, path);
    const auto curves = read_rd_csv(path);
    REQUIRE(curves.size() == 2);
    CHECK(curves[0].label == "ours");
    REQUIRE(curves[0].points.size() == 4);
    CHECK(curves[0].points[2].bpp == 0.2);
    CHECK(curves[0].points[3].psnr == 37.0);
    CHECK(curves[1].points[0].psnr == kPsnrIdentical);
    std::filesystem::remove(path);
}
