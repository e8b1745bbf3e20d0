#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace plenopress {

class KeyValueFile;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Main-lens / relay geometry carried for documentation only; nothing in
/// the pipeline reads these values.
struct OpticsMeta {
    double main_focal_length_mm = 0.0;
    double image_to_mla_a_mm = 0.0;
    double mla_to_sensor_b_mm = 0.0;
    double microlens_focal_length_mm = 0.0;
};

///
/// Hexagonally packed microlens array on a sensor. Columns are spaced by
/// `hex_horizontal_pitch`; odd columns are shifted down by `column_offset`.
/// Lattice positions outside [0, complete_cols) x [0, complete_rows) still
/// exist (they form the incomplete boundary microimages).
///
struct CameraSpec {
    int sensor_width = 0;
    int sensor_height = 0;
    double microlens_radius = 0.0;   // R, pixels
    double epa_coefficient = 1.0;    // m in (0, 1]
    Point2 grid_origin;              // center of complete lens (row 0, col 0)
    double hex_horizontal_pitch = 0.0;
    double hex_vertical_pitch = 0.0;
    double column_offset = 0.0;
    int complete_cols = 0;
    int complete_rows = 0;
    /// Pixels beneath one microlens as listed by the manufacturer (may differ from 2R).
    std::optional<double> nominal_microimage_diameter;
    std::optional<OpticsMeta> optics_meta;

    /// Spec with the default lattice pitches (sqrt(3)R, 2R, R).
    static CameraSpec with_default_pitch(int sensor_width, int sensor_height, double radius,
                                         double epa_coefficient, Point2 origin, int cols, int rows);

    /// The TSPC camera: 4080x3068 sensor, 66x42 complete microlenses, R = 35, m = 0.8.
    static CameraSpec tspc();

    static CameraSpec from_config(const KeyValueFile& kv);
    static CameraSpec load(const std::filesystem::path& path);
    KeyValueFile to_config() const;
    void save(const std::filesystem::path& path) const;

    /// Throws ContractError when an invariant does not hold.
    void validate() const;

    /// Center of lattice lens (row, col); valid for any integer row/col.
    Point2 lattice_center(int row, int col) const;
    bool is_complete(int row, int col) const {
        return row >= 0 && row < complete_rows && col >= 0 && col < complete_cols;
    }
    long long sensor_pixels() const { return static_cast<long long>(sensor_width) * sensor_height; }

    /// Scales every length (sensor, R, pitches, origin) by an integer factor.
    CameraSpec scaled(int factor) const;
};

struct MicrolensCenter {
    int row = 0;
    int col = 0;
    Point2 center;
};

/// Complete microlens centers in row-major order.
std::vector<MicrolensCenter> derive_centers(const CameraSpec& spec);

/// Side of the largest axis-aligned square inscribed in the EPA disc: sqrt(2) m R.
double min_crop_size(double epa_coefficient, double radius);

enum class PixelClass : std::uint8_t {
    InterMicroimage = 0,
    BoundaryIncomplete = 1,
    Vignetting = 2,
    SubApertureEffective = 3,
    LfEffectiveOnly = 4,
};
inline constexpr std::size_t kPixelClassCount = 5;

const char* to_string(PixelClass c);

using ClassCounts = std::array<long long, kPixelClassCount>;

struct PixelClassMap {
    int width = 0;
    int height = 0;
    std::vector<PixelClass> labels;  // row-major
    ClassCounts counts{};

    PixelClass at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    double fraction(PixelClass c) const;
};

/// Labels every sensor pixel. Throws ContractError when the crop squares of
/// adjacent lenses would overlap or d exceeds 2R.
PixelClassMap classify_pixels(const CameraSpec& spec, double crop_size, unsigned threads = 0);

/// Same classification without materializing the label grid.
ClassCounts count_pixel_classes(const CameraSpec& spec, double crop_size, unsigned threads = 0);

/// Class of a single pixel (x, y) under the rules of classify_pixels.
PixelClass classify_pixel(const CameraSpec& spec, double crop_size, int x, int y);

/// Fraction of pixels not covered by any disc on a `size` x `size` sensor
/// fully tiled by an ideal touching hex packing of radius `radius`.
double hex_packing_uncovered_fraction(double radius, int size, unsigned threads = 0);

}  // namespace plenopress
