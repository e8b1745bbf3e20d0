#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "plenopress/tensor.hpp"

// Layer kernels with reverse-mode gradients. Every backward takes the same
// layer input the forward saw plus the gradient of the output, returns the
// gradient of the input and accumulates parameter gradients into a layer of
// the same shape. Instantiated for float and double.
//
// visit(prefix, f) calls f(name, shape, values) for every parameter block in
// a fixed order; serialization, initialization and gradient probing use it.

namespace plenopress::nn {

template <typename T>
struct Conv2d {
    int in = 0;
    int out = 0;
    int kernel = 1;
    int stride = 1;
    /// Causal mask: only taps strictly before the centre in raster order.
    bool causal = false;
    std::vector<T> weight;  // out x in x k x k
    std::vector<T> bias;    // out

    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel_size, int stride_, bool causal_ = false);
    bool tap_active(int ky, int kx) const {
        const int c = kernel / 2;
        return !causal || ky < c || (ky == c && kx < c);
    }
    int padding() const { return (kernel - 1) / 2; }
    int output_size(int n) const { return (n + 2 * padding() - kernel) / stride + 1; }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".weight", std::vector<int>{out, in, kernel, kernel}, weight);
        f(prefix + ".bias", std::vector<int>{out}, bias);
    }
};

/// Zero-padded cross-correlation with same-style padding (k - 1) / 2.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2d<T>& layer);
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Conv2d<T>& layer, const Tensor<T>& grad_out, Conv2d<T>& grad);

/// Depth-to-space by 2: out(c, 2y + dy, 2x + dx) = in(4c + 2dy + dx, y, x).
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x);
template <typename T>
Tensor<T> depth_to_space_backward(const Tensor<T>& grad_out);

template <typename T>
struct Gdn {
    int channels = 0;
    bool inverse = false;
    std::vector<T> beta;   // channels
    std::vector<T> gamma;  // channels x channels, gamma[i * C + j]

    Gdn() = default;
    Gdn(int channels_, bool inverse_);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".beta", std::vector<int>{channels}, beta);
        f(prefix + ".gamma", std::vector<int>{channels, channels}, gamma);
    }
};

/// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2); the inverse form multiplies.
template <typename T>
Tensor<T> gdn(const Tensor<T>& x, const Gdn<T>& layer);
template <typename T>
Tensor<T> gdn_backward(const Tensor<T>& x, const Gdn<T>& layer, const Tensor<T>& grad_out, Gdn<T>& grad);

inline constexpr double kLeakySlope = 0.01;

template <typename T>
Tensor<T> relu(Tensor<T> x, T negative_slope = T(0));
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, Tensor<T> grad_out, T negative_slope = T(0));

/// Residual bottleneck down block: 1x1 -> ReLU -> 3x3/2 -> ReLU -> 1x1, plus
/// a 1x1/2 skip, followed by GDN.
template <typename T>
struct Rbnd {
    Conv2d<T> reduce, conv, expand, skip;
    Gdn<T> norm;

    Rbnd() = default;
    Rbnd(int in, int out);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        reduce.visit(prefix + ".reduce", f);
        conv.visit(prefix + ".conv", f);
        expand.visit(prefix + ".expand", f);
        skip.visit(prefix + ".skip", f);
        norm.visit(prefix + ".norm", f);
    }
};

/// Residual bottleneck up block: the 3x3 and the skip produce 4x channels and
/// go through depth-to-space; IGDN at the end.
template <typename T>
struct Rbnu {
    Conv2d<T> reduce, conv, expand, skip;
    Gdn<T> norm;

    Rbnu() = default;
    Rbnu(int in, int out);

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        reduce.visit(prefix + ".reduce", f);
        conv.visit(prefix + ".conv", f);
        expand.visit(prefix + ".expand", f);
        skip.visit(prefix + ".skip", f);
        norm.visit(prefix + ".norm", f);
    }
};

template <typename T>
Tensor<T> rbnd(const Tensor<T>& x, const Rbnd<T>& block);
template <typename T>
Tensor<T> rbnd_backward(const Tensor<T>& x, const Rbnd<T>& block, const Tensor<T>& grad_out, Rbnd<T>& grad);
template <typename T>
Tensor<T> rbnu(const Tensor<T>& x, const Rbnu<T>& block);
template <typename T>
Tensor<T> rbnu_backward(const Tensor<T>& x, const Rbnu<T>& block, const Tensor<T>& grad_out, Rbnu<T>& grad);

enum class ResamplerKind { Rbnd, Rbnu, Conv, Subpixel };

/// Channel-preserving 2x resampler: Conv is a 3x3 stride-2 convolution,
/// Subpixel a 3x3 convolution to 4C channels followed by depth-to-space.
template <typename T>
struct Resampler {
    ResamplerKind kind = ResamplerKind::Conv;
    Rbnd<T> down;
    Rbnu<T> up;
    Conv2d<T> conv;

    Resampler() = default;
    Resampler(ResamplerKind kind_, int channels);
    bool upsamples() const { return kind == ResamplerKind::Rbnu || kind == ResamplerKind::Subpixel; }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        switch (kind) {
            case ResamplerKind::Rbnd: down.visit(prefix, f); break;
            case ResamplerKind::Rbnu: up.visit(prefix, f); break;
            default: conv.visit(prefix, f); break;
        }
    }
};

template <typename T>
Tensor<T> resample(const Tensor<T>& x, const Resampler<T>& r);
template <typename T>
Tensor<T> resample_backward(const Tensor<T>& x, const Resampler<T>& r, const Tensor<T>& grad_out, Resampler<T>& grad);

enum class AttentionScale { Full, PerHead };

/// Linear maps are C x C, row-major, out_i = sum_j W[i * C + j] in_j + b_i.
/// The key map has no bias: softmax is invariant to it.
template <typename T>
struct AttentionStage {
    std::vector<T> wq, bq, wk, wv, bv, wo, bo;

    template <typename F>
    void visit(const std::string& prefix, int c, F&& f) {
        const std::vector<int> mat{c, c}, vec{c};
        f(prefix + ".wq", mat, wq);
        f(prefix + ".bq", vec, bq);
        f(prefix + ".wk", mat, wk);
        f(prefix + ".wv", mat, wv);
        f(prefix + ".bv", vec, bv);
        f(prefix + ".wo", mat, wo);
        f(prefix + ".bo", vec, bo);
    }
};

template <typename T>
struct GlobalAttention {
    int channels = 0;
    int heads = 1;
    AttentionScale scale = AttentionScale::PerHead;
    Resampler<T> resampler;
    AttentionStage<T> stage[2];

    GlobalAttention() = default;
    GlobalAttention(ResamplerKind kind, int channels_, int heads_, AttentionScale scale_);
    double score_divisor() const;

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        resampler.visit(prefix + ".resample", f);
        stage[0].visit(prefix + ".stage1", channels, f);
        stage[1].visit(prefix + ".stage2", channels, f);
    }
};

/// Largest spatial size (H * W) allowed on either side of an attention stage.
inline constexpr std::size_t kAttentionBudget = 9216;

struct AttentionStats {
    std::size_t rows = 0;
    double max_row_sum_error = 0.0;
};

/// f_d = resample(f); stage 1 queries f_d against keys and values from f,
/// stage 2 queries the stage-1 output against f again; each stage adds its
/// query input back, and the result adds f_d once more.
template <typename T>
Tensor<T> global_attention(const Tensor<T>& f, const GlobalAttention<T>& ga, AttentionStats* stats = nullptr);
template <typename T>
Tensor<T> global_attention_backward(const Tensor<T>& f, const GlobalAttention<T>& ga, const Tensor<T>& grad_out,
                                    GlobalAttention<T>& grad);

/// Copy of `layer` with every parameter set to zero, used as a gradient sink.
template <typename L>
L zeros_like(const L& layer) {
    L g = layer;
    g.visit("", [](const std::string&, const std::vector<int>&, auto& values) {
        for (auto& v : values) v = 0;
    });
    return g;
}

/// Default head count: 8 when channels >= 64, else 1.
inline int default_heads(int channels) { return channels >= 64 ? 8 : 1; }

}  // namespace plenopress::nn
