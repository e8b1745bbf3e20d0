#include "plenopress/entropy_coder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "plenopress/codec_model.hpp"
#include "plenopress/detmath.hpp"
#include "plenopress/error.hpp"

namespace plenopress {

namespace {

constexpr std::uint64_t kTop = 1ULL << 56;
constexpr std::uint64_t kBottom = 1ULL << 48;
constexpr int kFixedBits = 40;
constexpr std::uint64_t kFixedOne = 1ULL << kFixedBits;

std::uint64_t to_fixed(double p) {
    if (!(p > 0.0)) return 0;
    if (p >= 1.0) return kFixedOne;
    return static_cast<std::uint64_t>(std::ldexp(p, kFixedBits));
}

}  // namespace

// ---- tables ----------------------------------------------------------------

int CdfTable::bin_of(int value) const {
    if (value < low_value()) return 0;
    if (value > high_value()) return bins() - 1;
    return value - offset + 1;
}

void CdfTable::validate() const {
    if (bins() < 3) throw ContractError("cdf table: needs at least one value and two escape bins");
    if (cdf.front() != 0 || cdf.back() != kCdfTotal) throw ContractError("cdf table: must span 0 .. 2^16");
    for (int i = 0; i < bins(); ++i)
        if (cdf[i + 1] <= cdf[i]) throw ContractError("cdf table: bin " + std::to_string(i) + " has zero frequency");
}

double CdfTable::bits(int value) const {
    const int bin = bin_of(value);
    const double escape = (bin == 0 || bin == bins() - 1) ? 32.0 : 0.0;
    return kCdfBits - std::log2(static_cast<double>(freq(bin))) + escape;
}

CdfTable build_cdf_from(int lo, int hi, const std::function<double(double)>& cdf) {
    if (hi < lo) throw ContractError("build_cdf: empty support");
    if (static_cast<long long>(hi) - lo + 1 > kMaxSupport) throw ContractError("build_cdf: support too wide");
    const int bins = hi - lo + 3;
    // Fixed-point edges, forced monotone against approximation noise.
    std::vector<std::uint64_t> edge(bins + 1);
    edge[0] = 0;
    for (int k = 1; k < bins; ++k)
        edge[k] = std::max(edge[k - 1], to_fixed(cdf(static_cast<double>(lo) + (k - 1) - 0.5)));
    edge[bins] = kFixedOne;

    // freq = max(1, floor(mass * 2^16)), then largest-remainder correction to
    // an exact total of 2^16. Integer-only from here on.
    std::vector<std::uint32_t> freq(bins);
    std::vector<std::uint64_t> remainder(bins);
    long long total = 0;
    for (int k = 0; k < bins; ++k) {
        const std::uint64_t scaled = (edge[k + 1] - edge[k]) << kCdfBits;
        freq[k] = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, scaled >> kFixedBits));
        remainder[k] = scaled & (kFixedOne - 1);
        total += freq[k];
    }
    std::vector<int> order(bins);
    std::iota(order.begin(), order.end(), 0);
    long long diff = static_cast<long long>(kCdfTotal) - total;
    if (diff > 0) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
        for (long long i = 0; i < diff; ++i) ++freq[order[static_cast<std::size_t>(i) % bins]];
    } else if (diff < 0) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] < remainder[b]; });
        while (diff < 0) {
            bool progressed = false;
            for (int k : order) {
                if (diff == 0) break;
                if (freq[k] > 1) {
                    --freq[k];
                    ++diff;
                    progressed = true;
                }
            }
            if (!progressed) throw ContractError("build_cdf: too many bins for 16-bit precision");
        }
    }
    CdfTable t;
    t.offset = lo;
    t.cdf.resize(bins + 1);
    t.cdf[0] = 0;
    for (int k = 0; k < bins; ++k) t.cdf[k + 1] = t.cdf[k] + freq[k];
    return t;
}

CdfTable build_cdf(double mu, double sigma) {
    if (!(sigma >= kSigmaMin) || !std::isfinite(sigma) || !std::isfinite(mu))
        throw ContractError("build_cdf: sigma must be finite and >= " + std::to_string(kSigmaMin));
    const double half = kMaxSupport / 2 - 1;
    double lo = std::floor(mu - 6.0 * sigma), hi = std::ceil(mu + 6.0 * sigma);
    if (hi - lo + 1 > kMaxSupport) {
        const double centre = std::floor(mu + 0.5);
        lo = centre - half;
        hi = centre + half;
    }
    constexpr double kLimit = std::numeric_limits<int>::max() / 2;
    if (lo < -kLimit || hi > kLimit) throw ContractError("build_cdf: mean out of range");
    return build_cdf_from(static_cast<int>(lo), static_cast<int>(hi),
                          [&](double x) { return detmath::normal_cdf((x - mu) / sigma); });
}

// ---- range coder -----------------------------------------------------------

void RangeEncoder::encode(std::uint32_t start, std::uint32_t freq) {
    const std::uint64_t r = range_ >> kCdfBits;
    low_ += r * start;
    range_ = r * freq;
    while (range_ < kBottom) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::shift_low() {
    if (low_ < (0xFFULL << 48) || low_ >= kTop) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 56);
        std::uint8_t temp = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 48);
    }
    ++cache_size_;
    low_ = (low_ << 8) & (kTop - 1);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    // Smallest multiple of 2^48 in [low, low + range): its tail bytes are zero.
    low_ = (low_ + kBottom - 1) & ~(kBottom - 1);
    shift_low();
    out_.push_back(cache_);
    for (std::uint64_t i = 1; i < cache_size_; ++i) out_.push_back(0xFF);
    out_.erase(out_.begin());  // the always-zero leading byte
    std::vector<std::uint8_t> out = std::move(out_);
    *this = RangeEncoder();
    return out;
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
    for (int i = 0; i < 7; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ < size_) return data_[pos_++];
    ++overrun_;
    return 0;
}

std::uint32_t RangeDecoder::peek() {
    const std::uint64_t value = code_ / (range_ >> kCdfBits);
    if (value >= kCdfTotal) throw ContractError("range decoder: corrupt payload");
    return static_cast<std::uint32_t>(value);
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t freq) {
    const std::uint64_t r = range_ >> kCdfBits;
    code_ -= r * start;
    range_ = r * freq;
    while (range_ < kBottom) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

std::uint32_t RangeDecoder::decode_raw16() {
    const std::uint32_t v = peek();
    consume(v, 1);
    return v;
}

void RangeDecoder::finish() const {
    // A complete stream ends exactly six implied zero bytes early.
    if (overrun_ > 6) throw ContractError("range decoder: payload truncated");
    if (overrun_ < 6 || pos_ < size_) throw ContractError("range decoder: trailing bytes after payload");
}

void encode_value(RangeEncoder& enc, const CdfTable& table, int value) {
    const int bin = table.bin_of(value);
    enc.encode(table.cdf[bin], table.freq(bin));
    if (bin == 0 || bin == table.bins() - 1) {
        const auto u = static_cast<std::uint32_t>(value);
        enc.encode_raw16(u >> 16);
        enc.encode_raw16(u & 0xFFFF);
    }
}

int decode_value(RangeDecoder& dec, const CdfTable& table) {
    const std::uint32_t target = dec.peek();
    const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), target);
    const int bin = static_cast<int>(it - table.cdf.begin()) - 1;
    dec.consume(table.cdf[bin], table.freq(bin));
    if (bin != 0 && bin != table.bins() - 1) return table.offset + bin - 1;
    const std::uint32_t hi = dec.decode_raw16();
    const std::uint32_t u = (hi << 16) | dec.decode_raw16();
    const auto value = static_cast<int>(u);
    if ((bin == 0 && value >= table.low_value()) || (bin != 0 && value <= table.high_value()))
        throw ContractError("range decoder: escaped value inside table support");
    return value;
}

std::vector<std::uint8_t> rc_encode(const std::vector<int>& values, const std::vector<CdfTable>& tables) {
    if (values.size() != tables.size()) throw ContractError("rc_encode: one table per value required");
    RangeEncoder enc;
    for (std::size_t i = 0; i < values.size(); ++i) encode_value(enc, tables[i], values[i]);
    return enc.finish();
}

std::vector<int> rc_decode(const std::vector<std::uint8_t>& bytes, const std::vector<CdfTable>& tables) {
    RangeDecoder dec(bytes);
    std::vector<int> values(tables.size());
    for (std::size_t i = 0; i < tables.size(); ++i) values[i] = decode_value(dec, tables[i]);
    dec.finish();
    return values;
}

double shannon_bits(const std::vector<int>& values, const std::vector<CdfTable>& tables) {
    double bits = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) bits += tables[i].bits(values[i]);
    return bits;
}

}  // namespace plenopress
