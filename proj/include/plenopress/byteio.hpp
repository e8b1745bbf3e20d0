#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "plenopress/error.hpp"

namespace plenopress {

/// Little-endian byte sink.
class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) {
        std::uint32_t u;
        std::memcpy(&u, &f, sizeof u);
        le(u);
    }
    std::vector<std::uint8_t>& data() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

/// Little-endian byte source; running off the end is a ContractError.
class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& data, std::string origin) : data_(data), origin_(std::move(origin)) {}
    template <typename U>
    U le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_++]) << (8 * i));
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return s;
    }
    std::vector<std::uint8_t> block(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> b(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return b;
    }
    float f32() {
        const auto u = le<std::uint32_t>();
        float f;
        std::memcpy(&f, &u, sizeof f);
        return f;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ContractError(origin_ + ": truncated data");
    }
    const std::vector<std::uint8_t>& data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace plenopress
