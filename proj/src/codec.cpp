#include "plenopress/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "plenopress/byteio.hpp"
#include "plenopress/error.hpp"
#include "plenopress/parallel.hpp"

namespace plenopress {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'I', 'C'};

std::uint16_t checked_u16(long long v, const char* what) {
    if (v < 0 || v > 0xFFFF) throw ContractError(std::string("bitstream: ") + what + " " + std::to_string(v) + " does not fit 16 bits");
    return static_cast<std::uint16_t>(v);
}

int to_symbol(double v) {
    if (!std::isfinite(v) || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ContractError("encode: latent value out of the 32-bit range");
    return static_cast<int>(v);
}

/// Prior tables per hyper-latent channel, covering 30 scales around every
/// mixture component.
template <typename T>
std::vector<CdfTable> prior_tables(const FactorizedPrior<T>& prior) {
    std::vector<CdfTable> tables;
    tables.reserve(prior.channels);
    for (int c = 0; c < prior.channels; ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int k = 0; k < kPriorMixtures; ++k) {
            const std::size_t i = static_cast<std::size_t>(c) * kPriorMixtures + k;
            const double s = std::exp(static_cast<double>(prior.log_scale[i]));
            lo = std::min(lo, static_cast<double>(prior.loc[i]) - 30.0 * s);
            hi = std::max(hi, static_cast<double>(prior.loc[i]) + 30.0 * s);
        }
        lo = std::floor(lo);
        hi = std::ceil(hi);
        if (hi - lo + 1 > kMaxSupport) {
            const double centre = std::floor(0.5 * (lo + hi));
            lo = centre - (kMaxSupport / 2 - 1);
            hi = centre + (kMaxSupport / 2 - 1);
        }
        tables.push_back(build_cdf_from(static_cast<int>(lo), static_cast<int>(hi),
                                         [&](double x) { return factorized_cdf(prior, c, x); }));
    }
    return tables;
}

template <typename T>
Tensor<T> patch_tensor(const RasterImage& canvas, int px, int py, int size) {
    Tensor<T> x(3, size, size);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < size; ++y)
            for (int xx = 0; xx < size; ++xx)
                x.at(ch, y, xx) = static_cast<T>(canvas.at(px + xx, py + y, ch) / 255.0);
    return x;
}

template <typename T>
void write_patch(RasterImage& canvas, const Tensor<T>& x_hat, int px, int py) {
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < x_hat.height; ++y)
            for (int x = 0; x < x_hat.width; ++x) {
                const double v = round_half_away(static_cast<double>(x_hat.at(ch, y, x)) * 255.0);
                canvas.at(px + x, py + y, ch) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
}

/// The serial latent loop shared by encoder and decoder. `code` receives the
/// table for element (ch, row, col) and returns its quantized value; the
/// value is written into y_hat before the next position is visited.
template <typename T, typename Code>
void latent_loop(const Model<T>& model, const Tensor<T>& hyper, Tensor<T>& y_hat, Code&& code) {
    const int N = model.config.n;
    std::vector<T> mu(N), sigma(N);
    for (int r = 0; r < y_hat.height; ++r)
        for (int c = 0; c < y_hat.width; ++c) {
            entropy_parameters_at(model, hyper, y_hat, r, c, mu.data(), sigma.data());
            for (int ch = 0; ch < N; ++ch) {
                // Float 0.11 rounds below the double floor; clamp again after widening.
                const double m = static_cast<double>(mu[ch]);
                const double s = std::max(static_cast<double>(sigma[ch]), kSigmaMin);
                const int v = code(build_cdf(m, s), ch, r, c, m, s);
                y_hat.at(ch, r, c) = static_cast<T>(v);
            }
        }
}

template <typename T>
PatchSegment encode_patch(const Model<T>& model, const std::vector<CdfTable>& ptables, const RasterImage& canvas,
                          int px, int py, int size, PatchTrace* trace) {
    const auto lat = forward_analysis(model, patch_tensor<T>(canvas, px, py, size));
    const Tensor<T> z_hat = quantize(lat.z, QuantizeMode::Round);
    const Tensor<T> y_round = quantize(lat.y, QuantizeMode::Round);

    PatchSegment seg;
    RangeEncoder zenc;
    for (int c = 0; c < z_hat.channels; ++c)
        for (std::size_t p = 0; p < z_hat.plane(); ++p) {
            const int v = to_symbol(static_cast<double>(z_hat.channel(c)[p]));
            encode_value(zenc, ptables[c], v);
            if (trace) {
                trace->table_bits_z += ptables[c].bits(v);
                trace->model_bits_z += factorized_bits(model.prior, c, v);
            }
        }
    seg.z = zenc.finish();

    const Tensor<T> hyper = hyper_synthesis(model, z_hat);
    Tensor<T> y_hat(y_round.channels, y_round.height, y_round.width);
    RangeEncoder yenc;
    latent_loop(model, hyper, y_hat, [&](const CdfTable& table, int ch, int r, int c, double mu, double sigma) {
        const int v = to_symbol(static_cast<double>(y_round.at(ch, r, c)));
        encode_value(yenc, table, v);
        if (trace) {
            trace->table_bits_y += table.bits(v);
            trace->model_bits_y += gaussian_bits(v, mu, sigma);
        }
        return v;
    });
    seg.y = yenc.finish();
    if (trace) {
        trace->z_hat = z_hat.template cast<double>();
        trace->y_hat = y_hat.template cast<double>();
    }
    return seg;
}

template <typename T>
void decode_patch(const Model<T>& model, const std::vector<CdfTable>& ptables, const PatchSegment& seg,
                  RasterImage& canvas, int px, int py, int size, PatchTrace* trace) {
    const int zs = size / 64, ys = size / 16;
    Tensor<T> z_hat(model.config.m, zs, zs);
    RangeDecoder zdec(seg.z);
    for (int c = 0; c < z_hat.channels; ++c)
        for (std::size_t p = 0; p < z_hat.plane(); ++p) z_hat.channel(c)[p] = static_cast<T>(decode_value(zdec, ptables[c]));
    zdec.finish();

    const Tensor<T> hyper = hyper_synthesis(model, z_hat);
    Tensor<T> y_hat(model.config.n, ys, ys);
    RangeDecoder ydec(seg.y);
    latent_loop(model, hyper, y_hat,
                [&](const CdfTable& table, int, int, int, double, double) { return decode_value(ydec, table); });
    ydec.finish();
    write_patch(canvas, forward_synthesis(model, y_hat), px, py);
    if (trace) {
        trace->z_hat = z_hat.template cast<double>();
        trace->y_hat = y_hat.template cast<double>();
    }
}

template <typename T>
Bitstream encode_with(const Model<T>& model, const RasterImage& canvas, Bitstream stream, unsigned threads,
                      CodecTrace* trace) {
    const auto ptables = prior_tables(model.prior);
    const int P = stream.header.patch_size, nx = stream.header.patches_x();
    stream.segments.resize(stream.header.patch_count);
    if (trace) trace->patches.assign(stream.header.patch_count, {});
    parallel_for(stream.header.patch_count, threads, [&](std::size_t i) {
        const int px = static_cast<int>(i % nx) * P, py = static_cast<int>(i / nx) * P;
        stream.segments[i] = encode_patch(model, ptables, canvas, px, py, P, trace ? &trace->patches[i] : nullptr);
    });
    return stream;
}

template <typename T>
RasterImage decode_with(const Model<T>& model, const Bitstream& stream, unsigned threads, CodecTrace* trace) {
    const auto& h = stream.header;
    const auto ptables = prior_tables(model.prior);
    const int P = h.patch_size, nx = h.patches_x();
    RasterImage canvas(nx * P, h.patches_y() * P);
    if (trace) trace->patches.assign(h.patch_count, {});
    parallel_for(h.patch_count, threads, [&](std::size_t i) {
        const int px = static_cast<int>(i % nx) * P, py = static_cast<int>(i / nx) * P;
        decode_patch(model, ptables, stream.segments[i], canvas, px, py, P, trace ? &trace->patches[i] : nullptr);
    });
    RasterImage out(h.image_width(), h.image_height());
    out.blit(canvas, 0, 0, out.width(), out.height(), 0, 0);
    return out;
}

}  // namespace

int BitstreamHeader::patches_x() const { return patch_size ? (image_width() + patch_size - 1) / patch_size : 0; }
int BitstreamHeader::patches_y() const { return patch_size ? (image_height() + patch_size - 1) / patch_size : 0; }

std::vector<std::uint8_t> Bitstream::serialize() const {
    if (segments.size() != header.patch_count) throw ContractError("bitstream: segment count does not match header");
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.le(header.version);
    for (auto v : {header.width, header.height, header.crop_size, header.grid_rows, header.grid_cols}) w.le(v);
    w.bytes(header.model_id.data(), header.model_id.size());
    w.le(header.lambda_index);
    w.le(header.patch_size);
    w.le(header.patch_count);
    for (const auto& s : segments) {
        w.le(static_cast<std::uint32_t>(4 + s.z.size() + s.y.size()));
        w.le(static_cast<std::uint32_t>(s.z.size()));
        w.bytes(s.z.data(), s.z.size());
        w.bytes(s.y.data(), s.y.size());
    }
    return std::move(w.data());
}

Bitstream Bitstream::parse(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    ByteReader r(bytes, origin);
    if (r.str(4) != std::string(kMagic, 4)) throw ContractError(origin + ": not a plenopress bitstream");
    Bitstream b;
    auto& h = b.header;
    h.version = r.le<std::uint8_t>();
    if ((h.version & ~kFastModeFlag) != kBitstreamVersion)
        throw ContractError(origin + ": unsupported bitstream version " + std::to_string(h.version));
    h.width = r.le<std::uint16_t>();
    h.height = r.le<std::uint16_t>();
    h.crop_size = r.le<std::uint16_t>();
    h.grid_rows = r.le<std::uint16_t>();
    h.grid_cols = r.le<std::uint16_t>();
    const auto id = r.block(h.model_id.size());
    std::copy(id.begin(), id.end(), h.model_id.begin());
    h.lambda_index = r.le<std::uint8_t>();
    h.patch_size = r.le<std::uint16_t>();
    h.patch_count = r.le<std::uint16_t>();
    if (h.patch_size == 0 || h.patch_size % 64 != 0) throw ContractError(origin + ": bad patch size");
    if (static_cast<long long>(h.patches_x()) * h.patches_y() != h.patch_count)
        throw ContractError(origin + ": patch count does not match the image layout");
    for (int i = 0; i < h.patch_count; ++i) {
        const auto len = r.le<std::uint32_t>();
        const auto zlen = r.le<std::uint32_t>();
        if (len < 4 || zlen > len - 4) throw ContractError(origin + ": bad segment lengths");
        PatchSegment s;
        s.z = r.block(zlen);
        s.y = r.block(len - 4 - zlen);
        b.segments.push_back(std::move(s));
    }
    if (!r.done()) throw ContractError(origin + ": trailing bytes after the last segment");
    return b;
}

std::size_t Bitstream::byte_size() const {
    std::size_t n = kBitstreamHeaderBytes;
    for (const auto& s : segments) n += 8 + s.z.size() + s.y.size();
    return n;
}

void Bitstream::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Bitstream Bitstream::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes, path.string());
}

RasterImage pad_image(const RasterImage& image, int multiple) {
    if (multiple <= 0) throw ContractError("pad_image: multiple must be positive");
    const int w = (image.width() + multiple - 1) / multiple * multiple;
    const int h = (image.height() + multiple - 1) / multiple * multiple;
    RasterImage out(w, h);
    out.blit(image, 0, 0, image.width(), image.height(), 0, 0);
    return out;
}

Bitstream encode_image(const PreprocessedImage& pre, const ModelParams& params, const EncodeOptions& options,
                       CodecTrace* trace) {
    if (options.patch_size <= 0 || options.patch_size % 64 != 0)
        throw ContractError("encode: patch size must be a positive multiple of 64");
    if (options.lambda_index < 0 || options.lambda_index >= static_cast<int>(kLambdas.size()))
        throw ContractError("encode: lambda index must be in 0.." + std::to_string(kLambdas.size() - 1));
    if (pre.image.width() != pre.grid_cols * pre.crop_size || pre.image.height() != pre.grid_rows * pre.crop_size)
        throw ContractError("encode: image size does not match its grid");
    Bitstream stream;
    auto& h = stream.header;
    h.version = kBitstreamVersion | (options.precision == Precision::Fast ? kFastModeFlag : 0);
    h.width = checked_u16(pre.source_spec.sensor_width, "sensor width");
    h.height = checked_u16(pre.source_spec.sensor_height, "sensor height");
    h.crop_size = checked_u16(pre.crop_size, "crop size");
    h.grid_rows = checked_u16(pre.grid_rows, "grid rows");
    h.grid_cols = checked_u16(pre.grid_cols, "grid cols");
    h.model_id = model_id(params);
    h.lambda_index = static_cast<std::uint8_t>(options.lambda_index);
    h.patch_size = checked_u16(options.patch_size, "patch size");
    h.patch_count = checked_u16(static_cast<long long>(h.patches_x()) * h.patches_y(), "patch count");

    const RasterImage canvas = pad_image(pre.image, options.patch_size);
    if (options.precision == Precision::Fast) return encode_with(to_float(params), canvas, std::move(stream), options.threads, trace);
    return encode_with(params, canvas, std::move(stream), options.threads, trace);
}

RasterImage decode_image(const Bitstream& stream, const ModelParams& params, unsigned threads, CodecTrace* trace) {
    if (stream.header.model_id != model_id(params))
        throw ContractError("decode: bitstream was encoded with model " + to_hex(stream.header.model_id) +
                            ", parameters are " + to_hex(model_id(params)));
    if (stream.segments.size() != stream.header.patch_count) throw ContractError("decode: segment count mismatch");
    if (stream.header.precision() == Precision::Fast) return decode_with(to_float(params), stream, threads, trace);
    return decode_with(params, stream, threads, trace);
}

}  // namespace plenopress
