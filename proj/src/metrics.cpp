#include "plenopress/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "plenopress/error.hpp"

namespace plenopress {

namespace {

void check_same_size(const RasterImage& a, const RasterImage& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height())
        throw ContractError(std::string(what) + ": images differ in size (" + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                            std::to_string(b.height()) + ")");
    if (a.empty()) throw ContractError(std::string(what) + ": empty image");
}

constexpr int kScales = 5;
constexpr std::array<double, kScales> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double x = i - kWindow / 2;
        taps[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
        sum += taps[i];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

/// Separable "valid" Gaussian filtering.
Plane filter_valid(const Plane& in) {
    static const auto taps = gaussian_taps();
    const int ow = in.width - kWindow + 1, oh = in.height - kWindow + 1;
    Plane horiz{ow, in.height, std::vector<double>(static_cast<std::size_t>(ow) * in.height)};
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += taps[k] * in.at(x + k, y);
            horiz.v[static_cast<std::size_t>(y) * ow + x] = s;
        }
    Plane out{ow, oh, std::vector<double>(static_cast<std::size_t>(ow) * oh)};
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k) s += taps[k] * horiz.at(x, y + k);
            out.v[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

/// 2x2 average pooling; odd sizes are first padded by mirroring the last row/column.
Plane downsample(const Plane& in) {
    const int w = (in.width + 1) / 2, h = (in.height + 1) / 2;
    Plane out{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
    auto sample = [&](int x, int y) {
        return in.at(std::min(x, in.width - 1), std::min(y, in.height - 1));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.v[static_cast<std::size_t>(y) * w + x] =
                0.25 * (sample(2 * x, 2 * y) + sample(2 * x + 1, 2 * y) + sample(2 * x, 2 * y + 1) +
                        sample(2 * x + 1, 2 * y + 1));
    return out;
}

struct SsimTerms {
    double ssim;
    double cs;
};

SsimTerms ssim_terms(const Plane& a, const Plane& b) {
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    Plane ab{a.width, a.height, std::vector<double>(a.v.size())};
    Plane sq{a.width, a.height, std::vector<double>(a.v.size())};
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        ab.v[i] = a.v[i] * b.v[i];
        sq.v[i] = a.v[i] * a.v[i] + b.v[i] * b.v[i];
    }
    const auto mu_a = filter_valid(a), mu_b = filter_valid(b);
    const auto e_ab = filter_valid(ab), e_sq = filter_valid(sq);
    double ssim_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
        const double num0 = 2.0 * mu_a.v[i] * mu_b.v[i];
        const double den0 = mu_a.v[i] * mu_a.v[i] + mu_b.v[i] * mu_b.v[i];
        const double lum = (num0 + c1) / (den0 + c1);
        const double cs = (2.0 * e_ab.v[i] - num0 + c2) / (e_sq.v[i] - den0 + c2);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    const double n = static_cast<double>(mu_a.v.size());
    return {ssim_sum / n, cs_sum / n};
}

}  // namespace

double mse(const RasterImage& a, const RasterImage& b) {
    check_same_size(a, b, "mse");
    auto sa = a.samples(), sb = b.samples();
    double sum = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = static_cast<double>(sa[i]) - static_cast<double>(sb[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(sa.size());
}

double psnr(const RasterImage& a, const RasterImage& b) {
    const double e = mse(a, b);
    if (e == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(255.0 * 255.0 / e);
}

std::vector<double> luma_plane(const RasterImage& image) {
    std::vector<double> y(image.pixel_count());
    auto s = image.samples();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = 0.299 * s[3 * i] + 0.587 * s[3 * i + 1] + 0.114 * s[3 * i + 2];
    return y;
}

double ms_ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int width, int height) {
    constexpr int kMinSide = kWindow << (kScales - 1);
    if (width < kMinSide || height < kMinSide)
        throw ContractError("ms_ssim: image is " + std::to_string(width) + "x" + std::to_string(height) +
                            ", both sides must be at least " + std::to_string(kMinSide));
    if (a.size() != static_cast<std::size_t>(width) * height || b.size() != a.size())
        throw ContractError("ms_ssim: plane sizes do not match dimensions");
    Plane pa{width, height, a}, pb{width, height, b};
    double result = 1.0;
    for (int scale = 0; scale < kScales; ++scale) {
        if (scale > 0) {
            pa = downsample(pa);
            pb = downsample(pb);
        }
        const auto terms = ssim_terms(pa, pb);
        const double value = scale + 1 < kScales ? terms.cs : terms.ssim;
        result *= std::pow(std::max(value, 0.0), kScaleWeights[scale]);
    }
    return result;
}

double ms_ssim(const RasterImage& a, const RasterImage& b) {
    check_same_size(a, b, "ms_ssim");
    return ms_ssim_plane(luma_plane(a), luma_plane(b), a.width(), a.height());
}

double bits_per_pixel(double bit_count, const CameraSpec& spec) {
    if (bit_count < 0.0) throw ContractError("bpp: negative bit count");
    return bit_count / static_cast<double>(spec.sensor_pixels());
}

bool RdCurve::validate() const {
    for (std::size_t i = 1; i < points.size(); ++i)
        if (!(points[i].bpp > points[i - 1].bpp))
            throw ContractError("RD curve '" + label + "': bpp must be strictly increasing");
    for (const auto& p : points)
        if (!(p.bpp > 0.0)) throw ContractError("RD curve '" + label + "': bpp must be positive");
    for (std::size_t i = 1; i < points.size(); ++i)
        if (points[i].psnr < points[i - 1].psnr || points[i].ms_ssim < points[i - 1].ms_ssim) return false;
    return true;
}

namespace {

double parse_csv_number(const std::string& field, const std::filesystem::path& path, int line) {
    if (field == "inf" || field == "+inf" || field == "Infinity") return kPsnrIdentical;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != field.size() || field.empty())
        throw ContractError(path.string() + ":" + std::to_string(line) + ": not a number: '" + field + "'");
    return v;
}

std::string csv_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

}  // namespace

std::vector<RdCurve> read_rd_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, RdCurve> by_label;
    std::vector<std::string> order;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("label,", 0) == 0) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 4)
            throw ContractError(path.string() + ":" + std::to_string(line_no) + ": expected 4 CSV fields");
        RdPoint p{parse_csv_number(fields[1], path, line_no), parse_csv_number(fields[2], path, line_no),
                  parse_csv_number(fields[3], path, line_no)};
        if (!by_label.count(fields[0])) order.push_back(fields[0]);
        auto& curve = by_label[fields[0]];
        curve.label = fields[0];
        curve.points.push_back(p);
    }
    std::vector<RdCurve> curves;
    for (const auto& label : order) {
        auto curve = by_label[label];
        std::sort(curve.points.begin(), curve.points.end(),
                  [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
        curves.push_back(std::move(curve));
    }
    return curves;
}

void write_rd_csv(const std::vector<RdCurve>& curves, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label,bpp,psnr,ms_ssim\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            out << c.label << ',' << csv_number(p.bpp) << ',' << csv_number(p.psnr) << ','
                << csv_number(p.ms_ssim) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void append_rd_row(const std::string& label, const RdPoint& point, const std::filesystem::path& path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot write " + path.string());
    if (fresh) out << "label,bpp,psnr,ms_ssim\n";
    out << label << ',' << csv_number(point.bpp) << ',' << csv_number(point.psnr) << ','
        << csv_number(point.ms_ssim) << '\n';
}

namespace {

struct FitInput {
    std::vector<double> quality;
    std::vector<double> log_rate;
};

FitInput fit_input(const RdCurve& curve, QualityAxis axis, bool& dropped) {
    FitInput in;
    for (const auto& p : curve.points) {
        const double q = axis == QualityAxis::Psnr ? p.psnr : p.ms_ssim;
        if (!std::isfinite(q)) {
            dropped = true;
            continue;
        }
        if (!(p.bpp > 0.0)) throw ContractError("bd_rate: bpp must be positive in curve '" + curve.label + "'");
        in.quality.push_back(q);
        in.log_rate.push_back(std::log10(p.bpp));
    }
    if (in.quality.size() < 4)
        throw ContractError("bd_rate: curve '" + curve.label + "' needs at least 4 finite points");
    return in;
}

/// Cubic least squares in the normalized variable t = (q - mid) / scale.
Eigen::Vector4d fit_cubic(const FitInput& in, double mid, double scale) {
    const auto n = static_cast<Eigen::Index>(in.quality.size());
    Eigen::MatrixXd A(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = (in.quality[i] - mid) / scale;
        A(i, 0) = 1.0;
        A(i, 1) = t;
        A(i, 2) = t * t;
        A(i, 3) = t * t * t;
        y(i) = in.log_rate[i];
    }
    return A.colPivHouseholderQr().solve(y);
}

double integrate_cubic(const Eigen::Vector4d& c, double t0, double t1) {
    auto prim = [&](double t) { return c(0) * t + c(1) * t * t / 2 + c(2) * t * t * t / 3 + c(3) * t * t * t * t / 4; };
    return prim(t1) - prim(t0);
}

bool monotonic_on(const Eigen::Vector4d& c, double t0, double t1) {
    // Derivative c1 + 2 c2 t + 3 c3 t^2 must not change sign inside [t0, t1].
    constexpr int kSamples = 256;
    double sign = 0.0;
    for (int i = 0; i <= kSamples; ++i) {
        const double t = t0 + (t1 - t0) * i / kSamples;
        const double dv = c(1) + 2 * c(2) * t + 3 * c(3) * t * t;
        if (dv == 0.0) continue;
        if (sign == 0.0) sign = dv > 0 ? 1.0 : -1.0;
        else if ((dv > 0) != (sign > 0)) return false;
    }
    return true;
}

}  // namespace

BdRateResult bd_rate(const RdCurve& reference, const RdCurve& test, QualityAxis axis) {
    BdRateResult result;
    result.quality_not_increasing = !reference.validate() | !test.validate();
    const auto ref = fit_input(reference, axis, result.dropped_infinite_points);
    const auto tst = fit_input(test, axis, result.dropped_infinite_points);

    const auto [ref_lo, ref_hi] = std::minmax_element(ref.quality.begin(), ref.quality.end());
    const auto [tst_lo, tst_hi] = std::minmax_element(tst.quality.begin(), tst.quality.end());
    const double lo = std::max(*ref_lo, *tst_lo);
    const double hi = std::min(*ref_hi, *tst_hi);
    if (!(hi > lo)) throw ContractError("bd_rate: quality ranges of the two curves do not overlap");

    const double mid = 0.5 * (lo + hi);
    const double scale = 0.5 * (hi - lo);
    const auto c_ref = fit_cubic(ref, mid, scale);
    const auto c_tst = fit_cubic(tst, mid, scale);
    result.non_monotonic_fit = !monotonic_on(c_ref, -1.0, 1.0) || !monotonic_on(c_tst, -1.0, 1.0);

    const double avg_diff = (integrate_cubic(c_tst, -1.0, 1.0) - integrate_cubic(c_ref, -1.0, 1.0)) / 2.0;
    result.percent = (std::pow(10.0, avg_diff) - 1.0) * 100.0;
    return result;
}

}  // namespace plenopress
