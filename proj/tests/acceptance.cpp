// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "plenopress/camera_geometry.hpp"
#include "plenopress/codec.hpp"
#include "plenopress/entropy_coder.hpp"
#include "plenopress/gradcheck.hpp"
#include "plenopress/layers.hpp"
#include "plenopress/metrics.hpp"
#include "plenopress/preprocess.hpp"
#include "plenopress/render.hpp"
#include "plenopress/synth.hpp"

namespace fs = std::filesystem;
using namespace plenopress;
using Td = Tensor<double>;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

RenderConfig render_config(int V, int p, int s) {
    RenderConfig cfg;
    cfg.views_per_side = V;
    cfg.patch_size = p;
    cfg.view_step = s;
    return cfg;
}

Td random_tensor(int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Td t(c, h, w);
    for (auto& v : t.data) v = 2.0 * static_cast<double>(rng() >> 11) * 0x1p-53 - 1.0;
    return t;
}

void set_identity(std::vector<double>& w, int c) {
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < c; ++i) w[static_cast<std::size_t>(i) * c + i] = 1.0;
}

ModelParams toy_model() {
    ModelConfig cfg;
    cfg.n = 8;
    cfg.m = 8;
    return init_model(cfg);
}

/// 24 x 16 lenses of radius 12; d = 16 gives a 384 x 256 image.
CameraSpec toy_camera() { return CameraSpec::with_default_pitch(520, 400, 12.0, 0.8, {14.3, 13.6}, 24, 16); }

RasterImage toy_raw(std::uint64_t seed) {
    SynthOptions opts;
    opts.seed = seed;
    return synth_plenoptic(toy_camera(), opts);
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome crop_constant() {
    Outcome o;
    const double d = min_crop_size(0.8, 35.0);
    o.note(fmt("d_min = %.4f", d));
    o.require(std::fabs(d - 39.598) <= 0.01, "|d_min - 39.598| <= 0.01");
    return o;
}

Outcome canonical_geometry() {
    Outcome o;
    const auto spec = CameraSpec::tspc();
    SynthOptions opts;
    opts.scene = SynthScene::Constant;
    const auto raw = synth_plenoptic(spec, opts);
    const auto start = std::chrono::steady_clock::now();
    const auto pre = crop_and_align(raw, spec, 48);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double ratio = pixel_budget_ratio(pre);
    o.note(std::to_string(pre.image.width()) + "x" + std::to_string(pre.image.height()) + fmt(", ratio %.4f", ratio) +
           fmt(", %.2f s", secs));
    o.require(pre.image.width() == 3168 && pre.image.height() == 2016, "3168x2016");
    o.require(std::fabs(ratio - 0.5102) <= 0.005 * 0.5102, "ratio within 0.5% of 0.5102");
    o.require(secs < 5.0, "under 5 s");
    return o;
}

Outcome class_fractions() {
    Outcome o;
    const double ideal = 1.0 - std::numbers::pi / (2.0 * std::sqrt(3.0));
    const double inter = hex_packing_uncovered_fraction(35.0, 4000);
    const auto spec = CameraSpec::tspc();
    const auto counts = count_pixel_classes(spec, 48.0);
    const double boundary = static_cast<double>(counts[static_cast<int>(PixelClass::BoundaryIncomplete)]) /
                            static_cast<double>(spec.sensor_pixels());
    o.note(fmt("inter %.4f", inter) + fmt(" (ideal %.4f)", ideal) + fmt(", boundary %.4f", boundary));
    o.require(std::fabs(inter - ideal) <= 0.002, "inter-microimage within 0.2%");
    o.require(std::fabs(boundary - 0.083) <= 0.01, "boundary-incomplete within 1% of 8.3%");
    return o;
}

Outcome losslessness() {
    Outcome o;
    // Canonical lens size (R = 35, m = 0.8) on a small 8 x 6 array.
    const auto spec = CameraSpec::with_default_pitch(520, 470, 35.0, 0.8, {40.3, 40.6}, 8, 6);
    const int reference_d = 60;
    int lossless = 0, lossy = 0, cases = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SynthOptions opts;
        opts.seed = seed;
        opts.scene = seed == 2 ? SynthScene::Gradient : SynthScene::Textured;
        const auto raw = synth_plenoptic(spec, opts);
        for (int d : {40, 44, 48}) {
            const auto pre = crop_and_align(raw, spec, d);
            for (const auto& cfg : {render_config(5, 8, 8), render_config(3, d - 4, 2), render_config(5, 4, 9)}) {
                if (cfg.window_extent() > d) continue;
                ++cases;
                const auto ref = render_views(raw, spec, reference_d, cfg);
                lossless += view_pair_distortion(ref, render_views(reembed(pre), spec, reference_d, cfg),
                                                 DistortionMetric::Mse) == 0.0;
            }
            // One pixel past the crop on every side.
            const auto wide = render_config(3, d - 2, 2);
            const auto ref = render_views(raw, spec, reference_d, wide);
            const double mse = view_pair_distortion(ref, render_views(reembed(pre), spec, reference_d, wide),
                                                    DistortionMetric::Mse);
            lossy += mse > 0.0;
        }
    }
    o.note(std::to_string(lossless) + "/" + std::to_string(cases) + " fitting windows lossless, " +
           std::to_string(lossy) + "/9 oversized windows lossy");
    o.require(lossless == cases && cases > 0, "MSE exactly 0 when the window fits");
    o.require(lossy == 9, "MSE > 0 when the window exceeds d");
    return o;
}

Outcome coding_properties() {
    Outcome o;
    // (a) 1e6 randomized symbols, escapes included.
    std::mt19937_64 rng(11);
    std::vector<CdfTable> pool;
    for (int i = 0; i < 1024; ++i) {
        const double mu = static_cast<double>(rng() % 2001) / 50.0 - 20.0;
        const double sigma = kSigmaMin + static_cast<double>(rng() % 10000) / 250.0;
        pool.push_back(build_cdf(mu, sigma));
    }
    std::vector<int> values(1000000);
    std::vector<std::uint16_t> which(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        which[i] = static_cast<std::uint16_t>(rng() % pool.size());
        const CdfTable& t = pool[which[i]];
        const int span = t.high_value() - t.low_value() + 5;
        values[i] = t.low_value() - 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(span));
    }
    RangeEncoder enc;
    for (std::size_t i = 0; i < values.size(); ++i) encode_value(enc, pool[which[i]], values[i]);
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    bool exact = true;
    for (std::size_t i = 0; i < values.size() && exact; ++i) exact = decode_value(dec, pool[which[i]]) == values[i];
    dec.finish();
    o.require(exact, "1e6-symbol round trip");

    // (b) payload against the table Shannon sum on >= 1e4 latents.
    ModelConfig cfg;
    cfg.n = 32;
    cfg.m = 8;
    const ModelParams model = init_model(cfg);
    const auto pre = crop_and_align(toy_raw(6), toy_camera(), 16);
    EncodeOptions eo;
    eo.patch_size = 128;
    eo.lambda_index = 3;
    CodecTrace trace;
    const Bitstream stream = encode_image(pre, model, eo, &trace);
    std::size_t elements = 0;
    double table_bits = 0, payload_bits = 0;
    for (std::size_t i = 0; i < trace.patches.size(); ++i) {
        elements += trace.patches[i].y_hat.size();
        table_bits += trace.patches[i].table_bits_y;
        payload_bits += 8.0 * static_cast<double>(stream.segments[i].y.size());
    }
    o.note(std::to_string(elements) + " latents, payload/table = " + fmt("%.5f", payload_bits / table_bits));
    o.require(elements >= 10000, ">= 1e4 latents");
    o.require(payload_bits <= 1.01 * table_bits + 32.0 * static_cast<double>(trace.patches.size()),
              "payload within 1% + 4 bytes per segment");

    // (c) decoder latents equal encoder latents on 5 seeded toy images.
    const ModelParams toy = toy_model();
    bool identical = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto img = crop_and_align(toy_raw(100 + seed), toy_camera(), 16);
        EncodeOptions e;
        e.patch_size = 128;
        CodecTrace et, dt;
        const Bitstream s = encode_image(img, toy, e, &et);
        decode_image(Bitstream::parse(s.serialize()), toy, 0, &dt);
        for (std::size_t i = 0; i < et.patches.size(); ++i)
            identical = identical && et.patches[i].y_hat.data == dt.patches[i].y_hat.data &&
                        et.patches[i].z_hat.data == dt.patches[i].z_hat.data;
    }
    o.require(identical, "decoder y_hat bit-identical on 5 images");
    return o;
}

Outcome attention_mechanics() {
    Outcome o;
    ModelConfig cfg;
    cfg.n = 64;
    cfg.m = 64;
    const ModelParams model = init_model(cfg);
    nn::AttentionStats stats;
    nn::global_attention(random_tensor(64, 16, 16, 4), model.enc3, &stats);
    o.note(fmt("max row-sum error %.1e", stats.max_row_sum_error));
    o.require(stats.max_row_sum_error <= 1e-9, "rows sum to 1");

    nn::GlobalAttention<double> ga = model.henc2;
    for (auto& st : ga.stage) {
        std::fill(st.wv.begin(), st.wv.end(), 0.0);
        std::fill(st.bv.begin(), st.bv.end(), 0.0);
        std::fill(st.bo.begin(), st.bo.end(), 0.0);
    }
    const Td f = random_tensor(64, 8, 8, 3);
    const Td out = nn::global_attention(f, ga);
    const Td fd = nn::resample(f, ga.resampler);
    bool doubled = out.same_shape(fd);
    for (std::size_t i = 0; doubled && i < out.size(); ++i) doubled = out.data[i] == 2.0 * fd.data[i];
    o.require(doubled, "zero value paths give twice the resampler output");

    nn::GlobalAttention<double> hand(nn::ResamplerKind::Conv, 1, 1, nn::AttentionScale::Full);
    hand.resampler.conv.weight[4] = 1.0;
    for (auto& st : hand.stage) {
        set_identity(st.wq, 1);
        set_identity(st.wk, 1);
        set_identity(st.wv, 1);
        set_identity(st.wo, 1);
    }
    Td x(1, 2, 2);
    x.data = {1, 2, 3, 4};
    const double got = nn::global_attention(x, hand).data[0];
    o.note(fmt("hand example %.12f", got));
    o.require(std::fabs(got - 9.481335225440645) <= 1e-10, "hand example to 1e-10");
    return o;
}

Outcome gradients() {
    Outcome o;
    GradCheckOptions opt;
    opt.probes = 200;
    for (auto target : {GradTarget::Gdn, GradTarget::GlobalAttention}) {
        const auto r = grad_check(target, opt);
        o.note(std::string(to_string(target)) + fmt(" %.2e", r.max_relative_error));
        o.require(r.probes >= 200 && r.max_relative_error <= 1e-4, std::string(to_string(target)) + " <= 1e-4");
    }
    return o;
}

Outcome bd_rate_oracle() {
    Outcome o;
    RdCurve ref{"ref", {{0.1, 30, 0.9}, {0.2, 32, 0.93}, {0.4, 34, 0.95}, {0.8, 36, 0.97}}};
    RdCurve doubled = ref, halved = ref;
    for (auto& p : doubled.points) p.bpp *= 2.0;
    for (auto& p : halved.points) p.bpp *= 0.5;
    const double same = bd_rate(ref, ref).percent;
    const double up = bd_rate(ref, doubled).percent;
    const double down = bd_rate(ref, halved).percent;
    RdCurve other{"other", {{0.12, 29.5, 0.9}, {0.25, 32.2, 0.93}, {0.45, 33.6, 0.95}, {0.9, 36.4, 0.97}}};
    const double product = (1.0 + bd_rate(ref, other).percent / 100.0) * (1.0 + bd_rate(other, ref).percent / 100.0);
    o.note(fmt("same %+.2f%%", same) + fmt(", doubled %+.2f%%", up) + fmt(", halved %+.2f%%", down) +
           fmt(", product %.8f", product));
    o.require(std::fabs(same) < 0.005, "identical curves 0.00%");
    o.require(std::fabs(up - 100.0) <= 0.1, "doubled +100%");
    o.require(std::fabs(down + 50.0) <= 0.1, "halved -50%");
    o.require(std::fabs(product - 1.0) <= 1e-6, "antisymmetry");
    return o;
}

Outcome metric_sanity() {
    Outcome o;
    const RasterImage zero(16, 16, 0), full(16, 16, 255), sixteen(16, 16, 16);
    o.require(std::fabs(psnr(zero, full)) < 1e-12, "PSNR(0, 255) = 0");
    const double p16 = psnr(zero, sixteen);
    o.note(fmt("closed form %.4f dB", p16));
    o.require(std::fabs(p16 - 24.0484) <= 0.001, "24.0484 dB");
    const RasterImage textured = toy_raw(4);
    o.require(ms_ssim(textured, textured) == 1.0, "MS-SSIM(a, a) = 1");
    RasterImage a(180, 180, 90), b = a;
    for (int y = 0; y < 180; ++y)
        for (int x = 0; x < 180; ++x) b.at(x, y, (x + y) % 3) = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
    ViewGrid one_a{1, {a}}, one_b{1, {b}};
    ViewGrid many_a{5, std::vector<RasterImage>(25, a)}, many_b{5, std::vector<RasterImage>(25, b)};
    for (auto m : {DistortionMetric::Psnr, DistortionMetric::MsSsim}) {
        const double single = view_pair_distortion(one_a, one_b, m);
        const double averaged = view_pair_distortion(many_a, many_b, m);
        o.require(std::fabs(single - averaged) <= 1e-12 * std::fabs(single), "V^2 identical pairs = single pair");
    }
    return o;
}

Outcome determinism() {
    Outcome o;
    const fs::path dir = fs::temp_directory_path() / ("plenopress_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto spec = toy_camera();
    const auto raw = toy_raw(9);
    const ModelParams model = toy_model();
    const auto cfg = render_config(3, 6, 4);
    std::vector<std::vector<std::uint8_t>> pre_files, view_files, streams, decoded_files;
    for (unsigned threads : {1u, 4u, 1u, 3u}) {
        const std::string tag = std::to_string(pre_files.size());
        const auto pre = crop_and_align(raw, spec, 16, threads);
        write_image(pre.image, dir / ("pre" + tag + ".png"));
        pre_files.push_back(file_bytes(dir / ("pre" + tag + ".png")));
        const auto views = render_views(pre, cfg, threads);
        write_image(views.at(0, 2), dir / ("view" + tag + ".png"));
        auto bytes = file_bytes(dir / ("view" + tag + ".png"));
        for (const auto& v : views.views) bytes.insert(bytes.end(), v.samples().begin(), v.samples().end());
        view_files.push_back(bytes);
        EncodeOptions eo;
        eo.patch_size = 128;
        eo.threads = threads;
        const Bitstream s = encode_image(pre, model, eo);
        streams.push_back(s.serialize());
        write_image(decode_image(Bitstream::parse(streams.back()), model, threads), dir / ("dec" + tag + ".png"));
        decoded_files.push_back(file_bytes(dir / ("dec" + tag + ".png")));
    }
    fs::remove_all(dir);
    auto all_same = [](const auto& v) {
        for (const auto& x : v)
            if (x != v.front()) return false;
        return !v.front().empty();
    };
    o.note("4 runs at 1/4/1/3 threads, " + std::to_string(streams.front().size()) + "-byte stream");
    o.require(all_same(pre_files), "preprocess");
    o.require(all_same(view_files), "render");
    o.require(all_same(streams), "encode");
    o.require(all_same(decoded_files), "decode");
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"minimum crop size", crop_constant},
        {"canonical preprocess geometry", canonical_geometry},
        {"pixel class fractions", class_fractions},
        {"sub-aperture losslessness", losslessness},
        {"coder and bitstream properties", coding_properties},
        {"attention mechanics", attention_mechanics},
        {"gradient verification", gradients},
        {"BD-rate oracle", bd_rate_oracle},
        {"metric sanity", metric_sanity},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::printf("criterion %2zu %s  %s (%.1f s): %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, secs,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
