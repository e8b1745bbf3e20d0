#include <cmath>

#include "doctest.h"
#include "plenopress/codec.hpp"
#include "plenopress/error.hpp"
#include "plenopress/synth.hpp"

using namespace plenopress;

namespace {

ModelParams toy_model(int n = 8, int m = 8, std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.n = n;
    cfg.m = m;
    cfg.seed = seed;
    return init_model(cfg);
}

/// 4 x 3 lenses, d = 14: a 56 x 42 preprocessed image.
PreprocessedImage small_image(std::uint64_t seed) {
    const auto spec = CameraSpec::with_default_pitch(100, 96, 12.0, 0.8, {14.3, 13.6}, 4, 3);
    SynthOptions opts;
    opts.seed = seed;
    return crop_and_align(synth_plenoptic(spec, opts), spec, 14);
}

/// 24 x 16 lenses, d = 16: a 384 x 256 preprocessed image.
PreprocessedImage large_image(std::uint64_t seed) {
    const auto spec = CameraSpec::with_default_pitch(520, 400, 12.0, 0.8, {14.3, 13.6}, 24, 16);
    SynthOptions opts;
    opts.seed = seed;
    return crop_and_align(synth_plenoptic(spec, opts), spec, 16);
}

EncodeOptions options(int patch, Precision precision = Precision::Verify, unsigned threads = 1) {
    EncodeOptions o;
    o.patch_size = patch;
    o.precision = precision;
    o.threads = threads;
    o.lambda_index = 3;
    return o;
}

}  // namespace

TEST_CASE("padding") {
    RasterImage img(5, 3, 7);
    const RasterImage padded = pad_image(img, 4);
    CHECK(padded.width() == 8);
    CHECK(padded.height() == 4);
    CHECK(padded.at(4, 2, 1) == 7);
    CHECK(padded.at(5, 2, 1) == 0);
    CHECK(padded.at(4, 3, 1) == 0);
    CHECK(pad_image(padded, 4) == padded);
}

TEST_CASE("decoder latents equal encoder latents") {
    const ModelParams model = toy_model();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto pre = small_image(seed);
        CodecTrace enc_trace, dec_trace;
        const Bitstream stream = encode_image(pre, model, options(64), &enc_trace);
        CHECK(stream.header.patch_count == 1);
        const Bitstream parsed = Bitstream::parse(stream.serialize());
        const RasterImage out = decode_image(parsed, model, 1, &dec_trace);
        CHECK(out.width() == 56);
        CHECK(out.height() == 42);
        REQUIRE(dec_trace.patches.size() == enc_trace.patches.size());
        for (std::size_t i = 0; i < enc_trace.patches.size(); ++i) {
            CHECK(dec_trace.patches[i].y_hat.data == enc_trace.patches[i].y_hat.data);
            CHECK(dec_trace.patches[i].z_hat.data == enc_trace.patches[i].z_hat.data);
        }
    }
}

TEST_CASE("header round trip and layout") {
    const auto pre = small_image(3);
    const ModelParams model = toy_model();
    const Bitstream stream = encode_image(pre, model, options(64));
    const auto bytes = stream.serialize();
    CHECK(bytes.size() == stream.byte_size());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FPIC");
    CHECK(bytes[4] == kBitstreamVersion);
    CHECK((bytes[5] | bytes[6] << 8) == 100);    // sensor width
    CHECK((bytes[11] | bytes[12] << 8) == 3);    // grid rows
    CHECK(bytes[31] == 3);                       // lambda index
    CHECK((bytes[32] | bytes[33] << 8) == 64);   // patch size
    CHECK((bytes[34] | bytes[35] << 8) == 1);    // patch count
    const Bitstream parsed = Bitstream::parse(bytes);
    CHECK(parsed.header.model_id == model_id(model));
    CHECK(parsed.header.image_width() == 56);
    CHECK(parsed.segments[0].y == stream.segments[0].y);

    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_AS(Bitstream::parse(cut), ContractError);
    auto extra = bytes;
    extra.push_back(1);
    CHECK_THROWS_AS(Bitstream::parse(extra), ContractError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(Bitstream::parse(bad_magic), ContractError);
}

TEST_CASE("model mismatch and corrupt payload") {
    const auto pre = small_image(4);
    const Bitstream stream = encode_image(pre, toy_model(), options(64));
    CHECK_THROWS_AS(decode_image(stream, toy_model(8, 8, 2)), ContractError);
    Bitstream broken = stream;
    broken.segments[0].y.resize(broken.segments[0].y.size() / 2);
    bool rejected = false;
    try {
        const RasterImage out = decode_image(broken, toy_model());
        rejected = out != decode_image(stream, toy_model());
    } catch (const ContractError&) {
        rejected = true;
    }
    CHECK(rejected);
    CHECK_THROWS_AS(encode_image(pre, toy_model(), options(96)), ContractError);
    EncodeOptions bad = options(64);
    bad.lambda_index = 6;
    CHECK_THROWS_AS(encode_image(pre, toy_model(), bad), ContractError);
}

TEST_CASE("payload matches the rate model on 1e4 latents") {
    // An untrained model predicts sigma near 1 for latents with a spread near
    // 14, so most symbols escape. Calibrate the entropy head to a fixed
    // N(0, 10) so the comparison measures the coder, not the prior mismatch.
    ModelParams model = toy_model(32, 8);
    std::fill(model.ep3.weight.begin(), model.ep3.weight.end(), 0.0);
    for (int c = 0; c < 64; ++c) model.ep3.bias[c] = c < 32 ? 0.0 : 10.0;
    const auto pre = large_image(6);
    CodecTrace trace;
    const Bitstream stream = encode_image(pre, model, options(128, Precision::Verify, 0), &trace);
    CHECK(stream.header.patch_count == 6);
    std::size_t elements = 0;
    double model_bits = 0, table_bits = 0, payload_bits = 0;
    for (std::size_t i = 0; i < trace.patches.size(); ++i) {
        const auto& p = trace.patches[i];
        elements += p.y_hat.size();
        model_bits += p.model_bits_y;
        table_bits += p.table_bits_y;
        payload_bits += 8.0 * stream.segments[i].y.size();
    }
    CHECK(elements >= 10000);
    INFO("model " << model_bits << " table " << table_bits << " payload " << payload_bits);
    CHECK(payload_bits <= table_bits * 1.01 + 32.0 * trace.patches.size());
    CHECK(std::fabs(payload_bits - model_bits) / model_bits <= 0.01);
}

TEST_CASE("thread count and repetition do not change the stream") {
    const ModelParams model = toy_model();
    const auto pre = large_image(7);
    const auto a = encode_image(pre, model, options(128, Precision::Verify, 1)).serialize();
    const auto b = encode_image(pre, model, options(128, Precision::Verify, 4)).serialize();
    CHECK(a == b);
    const Bitstream s = Bitstream::parse(a);
    CHECK(decode_image(s, model, 1) == decode_image(s, model, 3));
}

TEST_CASE("fast mode round trip") {
    const ModelParams model = toy_model();
    const auto pre = small_image(8);
    CodecTrace enc, dec;
    const Bitstream stream = encode_image(pre, model, options(64, Precision::Fast), &enc);
    CHECK(stream.header.precision() == Precision::Fast);
    CHECK((stream.serialize()[4] & kFastModeFlag) != 0);
    decode_image(Bitstream::parse(stream.serialize()), model, 1, &dec);
    CHECK(dec.patches[0].y_hat.data == enc.patches[0].y_hat.data);
}

TEST_CASE("degenerate all-zero model") {
    ModelParams model = toy_model();
    // Zero the analysis output: every latent becomes 0.
    model.enc4.norm.beta.assign(model.enc4.norm.beta.size(), 1.0);
    std::fill(model.enc4.expand.weight.begin(), model.enc4.expand.weight.end(), 0.0);
    std::fill(model.enc4.expand.bias.begin(), model.enc4.expand.bias.end(), 0.0);
    std::fill(model.enc4.skip.weight.begin(), model.enc4.skip.weight.end(), 0.0);
    std::fill(model.enc4.skip.bias.begin(), model.enc4.skip.bias.end(), 0.0);
    CodecTrace trace;
    const Bitstream a = encode_image(small_image(9), model, options(64), &trace);
    for (double v : trace.patches[0].y_hat.data) CHECK(v == 0.0);
    const Bitstream b = encode_image(small_image(10), model, options(64));
    CHECK(a.segments[0].y == b.segments[0].y);
    CHECK(decode_image(a, model) == decode_image(b, model));
}
