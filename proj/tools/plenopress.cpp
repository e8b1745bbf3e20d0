// plenopress command-line driver. Every subcommand is a batch job: read
// inputs, write outputs, exit. Exit codes: 0 ok, 2 usage, 3 contract, 4 I/O.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "plenopress/codec.hpp"
#include "plenopress/error.hpp"
#include "plenopress/gradcheck.hpp"
#include "plenopress/metrics.hpp"
#include "plenopress/preprocess.hpp"
#include "plenopress/render.hpp"
#include "plenopress/synth.hpp"

namespace fs = std::filesystem;
using namespace plenopress;

namespace {

struct Common {
    std::string spec;
    int d = 0;
    std::string params;
    int lambda_index = 0;
    std::string out;
    unsigned threads = 0;
    bool verify = false;
};

struct RenderFlags {
    int views = 5;
    int patch = 1;
    int step = 1;
    bool flip = false;
    bool nearest = false;
    int width = 0, height = 0;

    RenderConfig config() const {
        RenderConfig cfg;
        cfg.views_per_side = views;
        cfg.patch_size = patch;
        cfg.view_step = step;
        cfg.flip_patches = flip;
        cfg.resample = nearest ? Resample::Nearest : Resample::Bilinear;
        if (width > 0) cfg.target_width = width;
        if (height > 0) cfg.target_height = height;
        cfg.validate();
        return cfg;
    }
};

void add_render_flags(CLI::App* cmd, RenderFlags& r) {
    cmd->add_option("--views", r.views, "views per side V")->check(CLI::PositiveNumber);
    cmd->add_option("--render-patch", r.patch, "patch side p taken from each microimage")->check(CLI::PositiveNumber);
    cmd->add_option("--view-step", r.step, "patch offset s between adjacent views")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--flip", r.flip, "rotate patches by 180 degrees");
    cmd->add_flag("--nearest", r.nearest, "nearest-neighbour resampling");
    cmd->add_option("--view-width", r.width, "resample views to this width");
    cmd->add_option("--view-height", r.height, "resample views to this height");
}

CameraSpec require_spec(const Common& c) {
    if (c.spec.empty()) throw UsageError("--spec is required");
    return CameraSpec::load(c.spec);
}

int require_d(const Common& c) {
    if (c.d <= 0) throw UsageError("--d is required and must be positive");
    return c.d;
}

std::string require_out(const Common& c) {
    if (c.out.empty()) throw UsageError("--out is required");
    return c.out;
}

fs::path sidecar_for(const fs::path& image) {
    fs::path p = image;
    return p.replace_extension(".cfg");
}

/// A `.cfg` input is a preprocessed sidecar; anything else is a raw sensor
/// image that is cropped here.
PreprocessedImage load_preprocessed(const std::string& input, const Common& c) {
    if (fs::path(input).extension() == ".cfg") {
        auto pre = PreprocessedImage::load(input);
        if (c.d > 0 && c.d != pre.crop_size)
            throw ContractError("--d " + std::to_string(c.d) + " disagrees with sidecar crop size " +
                                std::to_string(pre.crop_size));
        return pre;
    }
    return crop_and_align(read_image(input), require_spec(c), require_d(c), c.threads);
}

void print_point(const RdPoint& p) {
    std::printf("bpp=%.6f psnr=%s ms_ssim=%.6f\n", p.bpp,
                std::isinf(p.psnr) ? "inf" : std::to_string(p.psnr).c_str(), p.ms_ssim);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Focused plenoptic image preprocessing, rendering and learned compression"};
    app.require_subcommand(1);
    Common c;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--spec", c.spec, "camera spec (key-value file)");
        cmd->add_option("--d", c.d, "crop size d in pixels");
        cmd->add_option("--out", c.out, "output path");
        cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)");
    };
    auto codec_flags = [&](CLI::App* cmd) {
        cmd->add_option("--params", c.params, "model container, or a .cfg init recipe")->required();
        cmd->add_option("--lambda-index", c.lambda_index, "rate point 0..5")->check(CLI::Range(0, 5));
        cmd->add_flag("--verify", c.verify, "64-bit verification arithmetic");
    };

    // synth
    auto* synth = app.add_subcommand("synth", "render a synthetic raw plenoptic image");
    common(synth);
    std::string scene = "textured";
    SynthOptions synth_opts;
    synth->add_option("--scene", scene, "constant | gradient | textured");
    synth->add_option("--parallax", synth_opts.parallax_step, "scene shift per microimage");
    synth->add_option("--seed", synth_opts.seed, "texture seed");

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "crop and align the complete microimages");
    common(preprocess);
    std::string input;
    preprocess->add_option("input", input, "raw sensor image")->required();

    // render
    auto* render = app.add_subcommand("render", "render sub-aperture views");
    common(render);
    RenderFlags rflags;
    add_render_flags(render, rflags);
    render->add_option("input", input, "raw image (needs --spec, --d) or preprocessed sidecar")->required();

    // encode / decode
    auto* encode = app.add_subcommand("encode", "compress a preprocessed image");
    common(encode);
    codec_flags(encode);
    int patch_size = 384;
    encode->add_option("--patch-size", patch_size, "coding patch side (multiple of 64)");
    encode->add_option("input", input, "raw image (needs --spec, --d) or preprocessed sidecar")->required();

    auto* decode = app.add_subcommand("decode", "reconstruct a preprocessed image");
    common(decode);
    decode->add_option("--params", c.params, "model container, or a .cfg init recipe")->required();
    decode->add_option("input", input, "bitstream")->required();

    // metrics
    auto* metrics = app.add_subcommand("metrics", "full evaluation flow, one RD point");
    common(metrics);
    add_render_flags(metrics, rflags);
    metrics->add_option("--params", c.params, "model container or .cfg recipe");
    metrics->add_option("--lambda-index", c.lambda_index, "rate point 0..5")->check(CLI::Range(0, 5));
    metrics->add_flag("--verify", c.verify, "64-bit verification arithmetic");
    metrics->add_option("--patch-size", patch_size, "coding patch side (multiple of 64)");
    std::string codec_kind = "model", label = "plenopress";
    metrics->add_option("--codec", codec_kind, "model | identity");
    metrics->add_option("--label", label, "curve label for the CSV row");
    metrics->add_option("input", input, "raw sensor image")->required();

    // bdrate
    auto* bdrate = app.add_subcommand("bdrate", "BD-rate of a test curve against a reference curve");
    std::string ref_csv, test_csv, axis = "psnr";
    bdrate->add_option("reference", ref_csv, "reference RD CSV")->required();
    bdrate->add_option("test", test_csv, "test RD CSV")->required();
    bdrate->add_option("--metric", axis, "psnr | ms_ssim");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string target = "gdn";
    GradCheckOptions gopts;
    double tolerance = 1e-4;
    gradcheck->add_option("--target", target, "gdn | igdn | attention | rd");
    gradcheck->add_option("--probes", gopts.probes, "random probes")->check(CLI::PositiveNumber);
    gradcheck->add_option("--seed", gopts.seed, "probe seed");
    gradcheck->add_option("--channels", gopts.channels, "toy channel count")->check(CLI::PositiveNumber);
    gradcheck->add_option("--heads", gopts.heads, "attention heads")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", tolerance, "maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) {
            const CameraSpec spec = require_spec(c);
            if (scene == "constant") synth_opts.scene = SynthScene::Constant;
            else if (scene == "gradient") synth_opts.scene = SynthScene::Gradient;
            else if (scene == "textured") synth_opts.scene = SynthScene::Textured;
            else throw UsageError("unknown scene '" + scene + "'");
            write_image(synth_plenoptic(spec, synth_opts, c.threads), require_out(c));
        } else if (*preprocess) {
            const auto pre = crop_and_align(read_image(input), require_spec(c), require_d(c), c.threads);
            const fs::path out = require_out(c);
            write_image(pre.image, out);
            pre.save_sidecar(sidecar_for(out), out.filename());
            std::printf("%dx%d grid=%dx%d ratio=%.4f\n", pre.image.width(), pre.image.height(), pre.grid_cols,
                        pre.grid_rows, pixel_budget_ratio(pre));
        } else if (*render) {
            const RenderConfig cfg = rflags.config();
            const ViewGrid views = fs::path(input).extension() == ".cfg"
                                       ? render_views(PreprocessedImage::load(input), cfg, c.threads)
                                       : render_views(read_image(input), require_spec(c), require_d(c), cfg, c.threads);
            const fs::path out = require_out(c);
            fs::create_directories(out);
            views.save(out, cfg);
        } else if (*encode) {
            const auto pre = load_preprocessed(input, c);
            const auto model = load_or_init_model(c.params);
            EncodeOptions opts;
            opts.lambda_index = c.lambda_index;
            opts.patch_size = patch_size;
            opts.precision = c.verify ? Precision::Verify : Precision::Fast;
            opts.threads = c.threads;
            const Bitstream stream = encode_image(pre, model, opts);
            stream.save(require_out(c));
            std::printf("bytes=%zu bpp=%.6f\n", stream.byte_size(),
                        bits_per_pixel(8.0 * stream.byte_size(), pre.source_spec));
        } else if (*decode) {
            const Bitstream stream = Bitstream::load(input);
            const fs::path out = require_out(c);
            write_image(decode_image(stream, load_or_init_model(c.params), c.threads), out);
            if (!c.spec.empty()) {
                PreprocessedImage pre;
                pre.image = read_image(out);
                pre.crop_size = stream.header.crop_size;
                pre.grid_rows = stream.header.grid_rows;
                pre.grid_cols = stream.header.grid_cols;
                pre.source_spec = CameraSpec::load(c.spec);
                pre.save_sidecar(sidecar_for(out), out.filename());
            }
        } else if (*metrics) {
            const CameraSpec spec = require_spec(c);
            const int d = require_d(c);
            const RenderConfig cfg = rflags.config();
            const RasterImage raw = read_image(input);
            const auto pre = crop_and_align(raw, spec, d, c.threads);
            // References come from the original sensor image.
            const ViewGrid reference = render_views(raw, spec, d, cfg, c.threads);

            PreprocessedImage decoded = pre;
            double bits = 8.0 * kBitstreamHeaderBytes;
            if (codec_kind == "model") {
                if (c.params.empty()) throw UsageError("--params is required with --codec model");
                const auto model = load_or_init_model(c.params);
                EncodeOptions opts;
                opts.lambda_index = c.lambda_index;
                opts.patch_size = patch_size;
                opts.precision = c.verify ? Precision::Verify : Precision::Fast;
                opts.threads = c.threads;
                const Bitstream stream = encode_image(pre, model, opts);
                bits = 8.0 * stream.byte_size();
                decoded.image = decode_image(Bitstream::parse(stream.serialize()), model, c.threads);
            } else if (codec_kind != "identity") {
                throw UsageError("unknown codec '" + codec_kind + "'");
            }
            const ViewGrid test = render_views(decoded, cfg, c.threads);
            RdPoint point;
            point.bpp = bits_per_pixel(bits, spec);
            point.psnr = view_pair_distortion(reference, test, DistortionMetric::Psnr);
            point.ms_ssim = view_pair_distortion(reference, test, DistortionMetric::MsSsim);
            print_point(point);
            if (!c.out.empty()) append_rd_row(label, point, c.out);
        } else if (*bdrate) {
            QualityAxis q;
            if (axis == "psnr") q = QualityAxis::Psnr;
            else if (axis == "ms_ssim" || axis == "msssim") q = QualityAxis::MsSsim;
            else throw UsageError("unknown metric '" + axis + "'");
            const auto ref = read_rd_csv(ref_csv), tst = read_rd_csv(test_csv);
            if (ref.empty() || tst.empty()) throw ContractError("bdrate: empty RD curve file");
            const auto result = bd_rate(ref.front(), tst.front(), q);
            std::printf("%+.2f%%\n", result.percent);
            if (result.non_monotonic_fit) std::fprintf(stderr, "warning: non-monotonic fit\n");
            if (result.dropped_infinite_points) std::fprintf(stderr, "warning: infinite-quality points dropped\n");
        } else if (*gradcheck) {
            const auto result = grad_check(parse_grad_target(target), gopts);
            std::printf("%s max_relative_error=%.3e probes=%d\n", target.c_str(), result.max_relative_error,
                        result.probes);
            if (!(result.max_relative_error <= tolerance)) {
                std::fprintf(stderr, "plenopress: gradient error above %.1e\n", tolerance);
                return 3;
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "plenopress: %s\n", e.what());
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "plenopress: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "plenopress: %s\n", e.what());
        return 3;
    }
    return 0;
}
