#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace plenopress {

inline constexpr int kCdfBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfBits;
/// Largest number of in-support values a table may hold.
inline constexpr int kMaxSupport = 8192;

/// Quantized CDF over bins [low escape, offset .. offset + n - 1, high escape].
/// cdf has bins + 1 entries from 0 to 2^16, strictly increasing.
struct CdfTable {
    int offset = 0;
    std::vector<std::uint32_t> cdf;

    int bins() const { return static_cast<int>(cdf.size()) - 1; }
    int low_value() const { return offset; }
    int high_value() const { return offset + bins() - 3; }
    std::uint32_t freq(int bin) const { return cdf[bin + 1] - cdf[bin]; }
    /// Bin coding `value` (an escape bin when outside the support).
    int bin_of(int value) const;
    void validate() const;
    /// Ideal cost of `value` under the quantized table, raw escape bits included.
    double bits(int value) const;
};

/// Discretized Gaussian on floor(mu - 6 sigma) .. ceil(mu + 6 sigma).
CdfTable build_cdf(double mu, double sigma);

/// Table for a continuous CDF F on integers lo..hi, bin v covering
/// [v - 0.5, v + 0.5). F must be non-decreasing with limits 0 and 1.
CdfTable build_cdf_from(int lo, int hi, const std::function<double(double)>& cdf);

/// Range coder with a 56-bit window, 16-bit frequencies and byte-wise
/// renormalization. Carries propagate through a cached byte plus a count of
/// pending 0xFF bytes. The stream's leading byte is always zero and is not
/// stored; finish() pads the final value to a multiple of 2^48 so its last
/// six bytes are zero and are not stored either.
class RangeEncoder {
public:
    void encode(std::uint32_t start, std::uint32_t freq);
    /// Uniform 16-bit symbol.
    void encode_raw16(std::uint32_t value) { encode(value, 1); }
    std::vector<std::uint8_t> finish();

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint64_t range_ = (1ULL << 56) - 1;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    RangeDecoder(const std::uint8_t* data, std::size_t size);
    explicit RangeDecoder(const std::vector<std::uint8_t>& data) : RangeDecoder(data.data(), data.size()) {}

    /// Cumulative frequency of the next symbol, in [0, 2^16).
    std::uint32_t peek();
    void consume(std::uint32_t start, std::uint32_t freq);
    std::uint32_t decode_raw16();
    /// Throws ContractError when the payload was truncated or has trailing bytes.
    void finish() const;

private:
    std::uint8_t next_byte();

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::size_t overrun_ = 0;
    std::uint64_t code_ = 0;
    std::uint64_t range_ = (1ULL << 56) - 1;
};

/// Values outside the table support code an escape bin followed by the
/// value's 32-bit two's-complement pattern as two raw 16-bit symbols.
void encode_value(RangeEncoder& enc, const CdfTable& table, int value);
int decode_value(RangeDecoder& dec, const CdfTable& table);

std::vector<std::uint8_t> rc_encode(const std::vector<int>& values, const std::vector<CdfTable>& tables);
std::vector<int> rc_decode(const std::vector<std::uint8_t>& bytes, const std::vector<CdfTable>& tables);

/// Sum of CdfTable::bits over a sequence.
double shannon_bits(const std::vector<int>& values, const std::vector<CdfTable>& tables);

}  // namespace plenopress
