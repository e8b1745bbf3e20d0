#pragma once

#include <cstddef>
#include <vector>

namespace plenopress {

/// Dense C x H x W array, channel-major. T is double in verification mode
/// and float in fast mode.
template <typename T>
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c, int h, int w, T value = T(0))
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, value) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    T* channel(int c) { return data.data() + c * plane(); }
    const T* channel(int c) const { return data.data() + c * plane(); }
    T& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    const T& at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(channels, height, width);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace plenopress
