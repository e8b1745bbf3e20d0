#include "plenopress/camera_geometry.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "plenopress/error.hpp"
#include "plenopress/keyvalue.hpp"
#include "plenopress/parallel.hpp"

namespace plenopress {

namespace {

int column_parity(int col) { return ((col % 2) + 2) % 2; }

std::string fmt_num(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

}  // namespace

CameraSpec CameraSpec::with_default_pitch(int sensor_width, int sensor_height, double radius,
                                          double epa_coefficient, Point2 origin, int cols,
                                          int rows) {
    CameraSpec spec;
    spec.sensor_width = sensor_width;
    spec.sensor_height = sensor_height;
    spec.microlens_radius = radius;
    spec.epa_coefficient = epa_coefficient;
    spec.grid_origin = origin;
    spec.hex_horizontal_pitch = std::sqrt(3.0) * radius;
    spec.hex_vertical_pitch = 2.0 * radius;
    spec.column_offset = radius;
    spec.complete_cols = cols;
    spec.complete_rows = rows;
    return spec;
}

CameraSpec CameraSpec::tspc() {
    // Lattice pitch follows the 69-pixel microimage diameter; R = 35 is the
    // working radius used for cropping and classification.
    constexpr double diameter = 69.0;
    CameraSpec spec;
    spec.sensor_width = 4080;
    spec.sensor_height = 3068;
    spec.microlens_radius = 35.0;
    spec.epa_coefficient = 0.8;
    spec.hex_horizontal_pitch = std::sqrt(3.0) * diameter / 2.0;
    spec.hex_vertical_pitch = diameter;
    spec.column_offset = diameter / 2.0;
    spec.complete_cols = 66;
    spec.complete_rows = 42;
    // Center the 66x42 block on the sensor.
    spec.grid_origin.x = (spec.sensor_width - (spec.complete_cols - 1) * spec.hex_horizontal_pitch) / 2.0;
    spec.grid_origin.y =
        (spec.sensor_height - ((spec.complete_rows - 1) * spec.hex_vertical_pitch + spec.column_offset)) / 2.0;
    spec.nominal_microimage_diameter = diameter;
    spec.optics_meta = OpticsMeta{20.0, 0.0, 0.0, 4.0 / 3.0};
    return spec;
}

CameraSpec CameraSpec::from_config(const KeyValueFile& kv) {
    CameraSpec spec;
    spec.sensor_width = static_cast<int>(kv.get_int("sensor_width"));
    spec.sensor_height = static_cast<int>(kv.get_int("sensor_height"));
    spec.microlens_radius = kv.get_double("microlens_radius");
    spec.epa_coefficient = kv.get_double("epa_coefficient");
    spec.grid_origin.x = kv.get_double("grid_origin_x");
    spec.grid_origin.y = kv.get_double("grid_origin_y");
    spec.hex_horizontal_pitch = kv.get_double_or("hex_horizontal_pitch", std::sqrt(3.0) * spec.microlens_radius);
    spec.hex_vertical_pitch = kv.get_double_or("hex_vertical_pitch", 2.0 * spec.microlens_radius);
    spec.column_offset = kv.get_double_or("column_offset", spec.microlens_radius);
    spec.complete_cols = static_cast<int>(kv.get_int("complete_cols"));
    spec.complete_rows = static_cast<int>(kv.get_int("complete_rows"));
    if (kv.contains("nominal_microimage_diameter"))
        spec.nominal_microimage_diameter = kv.get_double("nominal_microimage_diameter");
    if (kv.contains("optics_main_focal_length_mm")) {
        OpticsMeta meta;
        meta.main_focal_length_mm = kv.get_double("optics_main_focal_length_mm");
        meta.image_to_mla_a_mm = kv.get_double_or("optics_a_mm", 0.0);
        meta.mla_to_sensor_b_mm = kv.get_double_or("optics_b_mm", 0.0);
        meta.microlens_focal_length_mm = kv.get_double_or("optics_microlens_focal_length_mm", 0.0);
        spec.optics_meta = meta;
    }
    spec.validate();
    return spec;
}

CameraSpec CameraSpec::load(const std::filesystem::path& path) {
    return from_config(KeyValueFile::load(path));
}

KeyValueFile CameraSpec::to_config() const {
    KeyValueFile kv;
    kv.set("sensor_width", static_cast<long long>(sensor_width));
    kv.set("sensor_height", static_cast<long long>(sensor_height));
    kv.set("microlens_radius", microlens_radius);
    kv.set("epa_coefficient", epa_coefficient);
    kv.set("grid_origin_x", grid_origin.x);
    kv.set("grid_origin_y", grid_origin.y);
    kv.set("hex_horizontal_pitch", hex_horizontal_pitch);
    kv.set("hex_vertical_pitch", hex_vertical_pitch);
    kv.set("column_offset", column_offset);
    kv.set("complete_cols", static_cast<long long>(complete_cols));
    kv.set("complete_rows", static_cast<long long>(complete_rows));
    if (nominal_microimage_diameter) kv.set("nominal_microimage_diameter", *nominal_microimage_diameter);
    if (optics_meta) {
        kv.set("optics_main_focal_length_mm", optics_meta->main_focal_length_mm);
        kv.set("optics_a_mm", optics_meta->image_to_mla_a_mm);
        kv.set("optics_b_mm", optics_meta->mla_to_sensor_b_mm);
        kv.set("optics_microlens_focal_length_mm", optics_meta->microlens_focal_length_mm);
    }
    return kv;
}

void CameraSpec::save(const std::filesystem::path& path) const { to_config().save(path); }

void CameraSpec::validate() const {
    if (sensor_width <= 0 || sensor_height <= 0) throw ContractError("camera spec: sensor size must be positive");
    if (!(microlens_radius > 0.0)) throw ContractError("camera spec: microlens radius must be > 0");
    if (!(epa_coefficient > 0.0 && epa_coefficient <= 1.0))
        throw ContractError("camera spec: EPA coefficient must lie in (0, 1]");
    if (!(hex_horizontal_pitch > 0.0 && hex_vertical_pitch > 0.0))
        throw ContractError("camera spec: lattice pitches must be > 0");
    if (complete_cols <= 0 || complete_rows <= 0)
        throw ContractError("camera spec: complete grid must contain at least one microlens");
    const double r = microlens_radius;
    for (int row = 0; row < complete_rows; ++row) {
        for (int col = 0; col < complete_cols; ++col) {
            auto p = lattice_center(row, col);
            if (p.x - r < 0.0 || p.y - r < 0.0 || p.x + r > sensor_width || p.y + r > sensor_height) {
                throw ContractError("camera spec: complete microlens (" + std::to_string(row) + "," +
                                    std::to_string(col) + ") at (" + fmt_num(p.x) + "," + fmt_num(p.y) +
                                    ") is closer than R to the sensor edge");
            }
        }
    }
}

Point2 CameraSpec::lattice_center(int row, int col) const {
    return {grid_origin.x + col * hex_horizontal_pitch,
            grid_origin.y + row * hex_vertical_pitch + column_parity(col) * column_offset};
}

CameraSpec CameraSpec::scaled(int factor) const {
    CameraSpec s = *this;
    s.sensor_width *= factor;
    s.sensor_height *= factor;
    s.microlens_radius *= factor;
    s.grid_origin.x *= factor;
    s.grid_origin.y *= factor;
    s.hex_horizontal_pitch *= factor;
    s.hex_vertical_pitch *= factor;
    s.column_offset *= factor;
    if (s.nominal_microimage_diameter) *s.nominal_microimage_diameter *= factor;
    return s;
}

std::vector<MicrolensCenter> derive_centers(const CameraSpec& spec) {
    spec.validate();
    std::vector<MicrolensCenter> centers;
    centers.reserve(static_cast<std::size_t>(spec.complete_rows) * spec.complete_cols);
    for (int row = 0; row < spec.complete_rows; ++row)
        for (int col = 0; col < spec.complete_cols; ++col)
            centers.push_back({row, col, spec.lattice_center(row, col)});
    return centers;
}

double min_crop_size(double epa_coefficient, double radius) {
    if (!(radius > 0.0)) throw ContractError("min_crop_size: radius must be > 0");
    if (!(epa_coefficient > 0.0 && epa_coefficient <= 1.0))
        throw ContractError("min_crop_size: EPA coefficient must lie in (0, 1]");
    return std::sqrt(2.0) * epa_coefficient * radius;
}

const char* to_string(PixelClass c) {
    switch (c) {
        case PixelClass::InterMicroimage: return "inter_microimage";
        case PixelClass::BoundaryIncomplete: return "boundary_incomplete";
        case PixelClass::Vignetting: return "vignetting";
        case PixelClass::SubApertureEffective: return "sub_aperture_effective";
        case PixelClass::LfEffectiveOnly: return "lf_effective_only";
    }
    return "unknown";
}

double PixelClassMap::fraction(PixelClass c) const {
    return static_cast<double>(counts[static_cast<std::size_t>(c)]) /
           (static_cast<double>(width) * static_cast<double>(height));
}

namespace {

void check_crop_size(const CameraSpec& spec, double d) {
    if (!(d > 0.0)) throw ContractError("classify: crop size must be > 0");
    if (d > 2.0 * spec.microlens_radius + 1e-12)
        throw ContractError("classify: crop size " + fmt_num(d) + " exceeds the microlens diameter 2R");
    // Offsets to the three distinct lattice neighbours; axis-aligned squares
    // of side d overlap when both |dx| and |dy| are below d.
    const double h = spec.hex_horizontal_pitch, v = spec.hex_vertical_pitch, o = spec.column_offset;
    const Point2 neighbours[] = {{h, o}, {h, o - v}, {0.0, v}};
    for (auto n : neighbours) {
        if (d > std::abs(n.x) && d > std::abs(n.y))
            throw ContractError("classify: crop size " + fmt_num(d) +
                                " makes crop squares of adjacent microlenses overlap");
    }
}

/// Row-level classifier with the search window precomputed.
class Classifier {
public:
    Classifier(const CameraSpec& spec, double d)
        : spec_(spec),
          half_(d / 2.0),
          r2_(spec.microlens_radius * spec.microlens_radius),
          epa2_(std::pow(spec.epa_coefficient * spec.microlens_radius, 2)),
          reach_cols_(static_cast<int>(std::ceil(spec.microlens_radius / spec.hex_horizontal_pitch)) + 1),
          reach_rows_(static_cast<int>(std::ceil(spec.microlens_radius / spec.hex_vertical_pitch)) + 1) {}

    PixelClass classify(int x, int y) const {
        const double px = x + 0.5, py = y + 0.5;
        bool in_disc = false, in_incomplete = false, in_epa = false, in_square = false;
        const int c0 = static_cast<int>(std::floor((px - spec_.grid_origin.x) / spec_.hex_horizontal_pitch));
        for (int col = c0 - reach_cols_ + 1; col <= c0 + reach_cols_; ++col) {
            const double base_y = spec_.lattice_center(0, col).y;
            const int r0 = static_cast<int>(std::floor((py - base_y) / spec_.hex_vertical_pitch));
            for (int row = r0 - reach_rows_ + 1; row <= r0 + reach_rows_; ++row) {
                const Point2 c = spec_.lattice_center(row, col);
                const double dx = px - c.x, dy = py - c.y;
                const double dist2 = dx * dx + dy * dy;
                if (dist2 >= r2_) continue;
                in_disc = true;
                if (!spec_.is_complete(row, col)) {
                    in_incomplete = true;
                    continue;
                }
                if (dist2 < epa2_) in_epa = true;
                if (dx >= -half_ && dx < half_ && dy >= -half_ && dy < half_) in_square = true;
            }
        }
        if (!in_disc) return PixelClass::InterMicroimage;
        if (in_incomplete) return PixelClass::BoundaryIncomplete;
        if (!in_epa) return PixelClass::Vignetting;
        if (in_square) return PixelClass::SubApertureEffective;
        return PixelClass::LfEffectiveOnly;
    }

private:
    const CameraSpec& spec_;
    double half_, r2_, epa2_;
    int reach_cols_, reach_rows_;
};

template <typename RowSink>
ClassCounts classify_rows(const CameraSpec& spec, double d, unsigned threads, RowSink&& sink) {
    spec.validate();
    check_crop_size(spec, d);
    Classifier classifier(spec, d);
    std::mutex mutex;
    ClassCounts total{};
    const unsigned workers = std::min<unsigned>(resolve_threads(threads), spec.sensor_height);
    parallel_for(workers, workers, [&](std::size_t t) {
        ClassCounts local{};
        std::vector<PixelClass> row(static_cast<std::size_t>(spec.sensor_width));
        for (int y = static_cast<int>(t); y < spec.sensor_height; y += static_cast<int>(workers)) {
            for (int x = 0; x < spec.sensor_width; ++x) {
                row[x] = classifier.classify(x, y);
                ++local[static_cast<std::size_t>(row[x])];
            }
            sink(y, row);
        }
        std::lock_guard lock(mutex);
        for (std::size_t k = 0; k < kPixelClassCount; ++k) total[k] += local[k];
    });
    return total;
}

}  // namespace

PixelClassMap classify_pixels(const CameraSpec& spec, double crop_size, unsigned threads) {
    PixelClassMap map;
    map.width = spec.sensor_width;
    map.height = spec.sensor_height;
    map.labels.resize(static_cast<std::size_t>(spec.sensor_pixels()));
    map.counts = classify_rows(spec, crop_size, threads, [&](int y, const std::vector<PixelClass>& row) {
        std::copy(row.begin(), row.end(), map.labels.begin() + static_cast<std::ptrdiff_t>(y) * map.width);
    });
    return map;
}

ClassCounts count_pixel_classes(const CameraSpec& spec, double crop_size, unsigned threads) {
    return classify_rows(spec, crop_size, threads, [](int, const std::vector<PixelClass>&) {});
}

PixelClass classify_pixel(const CameraSpec& spec, double crop_size, int x, int y) {
    check_crop_size(spec, crop_size);
    return Classifier(spec, crop_size).classify(x, y);
}

double hex_packing_uncovered_fraction(double radius, int size, unsigned threads) {
    // A single declared complete lens; every other lattice disc counts as
    // covered (boundary class), so only the gaps between discs remain.
    if (size < 3 * radius) throw ContractError("hex packing tile smaller than 3R");
    CameraSpec spec = CameraSpec::with_default_pitch(size, size, radius, 1.0,
                                                     {1.25 * radius, 1.25 * radius}, 1, 1);
    auto counts = count_pixel_classes(spec, min_crop_size(1.0, radius), threads);
    return static_cast<double>(counts[static_cast<std::size_t>(PixelClass::InterMicroimage)]) /
           static_cast<double>(spec.sensor_pixels());
}

}  // namespace plenopress
