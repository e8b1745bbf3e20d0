#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "plenopress/codec_model.hpp"
#include "plenopress/entropy_coder.hpp"
#include "plenopress/image.hpp"
#include "plenopress/preprocess.hpp"

namespace plenopress {

/// Verify runs the model in double precision, Fast in float. Fast streams
/// set the high bit of the version byte and decode only in fast mode.
enum class Precision { Verify, Fast };

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::uint8_t kFastModeFlag = 0x80;
inline constexpr std::size_t kBitstreamHeaderBytes = 36;

struct BitstreamHeader {
    std::uint8_t version = kBitstreamVersion;
    std::uint16_t width = 0;   // original sensor width
    std::uint16_t height = 0;  // original sensor height
    std::uint16_t crop_size = 0;
    std::uint16_t grid_rows = 0;
    std::uint16_t grid_cols = 0;
    ModelId model_id{};
    std::uint8_t lambda_index = 0;
    std::uint16_t patch_size = 0;
    std::uint16_t patch_count = 0;

    Precision precision() const { return (version & kFastModeFlag) ? Precision::Fast : Precision::Verify; }
    int image_width() const { return grid_cols * crop_size; }
    int image_height() const { return grid_rows * crop_size; }
    int patches_x() const;
    int patches_y() const;
};

struct PatchSegment {
    std::vector<std::uint8_t> z;
    std::vector<std::uint8_t> y;
};

/// "FPIC" u8 version, u16 width, height, d, grid_rows, grid_cols, 16-byte
/// model id, u8 lambda index, u16 patch size, u16 patch count, then per patch
/// u32 segment length, u32 z length, z bytes, y bytes (little-endian).
struct Bitstream {
    BitstreamHeader header;
    std::vector<PatchSegment> segments;

    std::vector<std::uint8_t> serialize() const;
    static Bitstream parse(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<bitstream>");
    std::size_t byte_size() const;
    void save(const std::filesystem::path& path) const;
    static Bitstream load(const std::filesystem::path& path);
};

struct EncodeOptions {
    int lambda_index = 0;
    int patch_size = 384;
    Precision precision = Precision::Verify;
    unsigned threads = 0;
};

/// Per-patch latents and bit accounting, for verification.
struct PatchTrace {
    Tensor<double> z_hat, y_hat;
    double model_bits_z = 0.0;  // rate_estimate on the same latents
    double model_bits_y = 0.0;
    double table_bits_z = 0.0;  // ideal cost under the quantized tables
    double table_bits_y = 0.0;
};

struct CodecTrace {
    std::vector<PatchTrace> patches;
};

/// Zero-pads right and bottom to multiples of `multiple`.
RasterImage pad_image(const RasterImage& image, int multiple);

/// Pads to the patch size, then codes each patch independently: z with the
/// factorized tables, y in raster order with tables from the context model.
Bitstream encode_image(const PreprocessedImage& pre, const ModelParams& params, const EncodeOptions& options,
                       CodecTrace* trace = nullptr);
/// Returns the preprocessed-size reconstruction.
RasterImage decode_image(const Bitstream& stream, const ModelParams& params, unsigned threads = 0,
                         CodecTrace* trace = nullptr);

}  // namespace plenopress
