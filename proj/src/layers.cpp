#include "plenopress/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "plenopress/detmath.hpp"
#include "plenopress/error.hpp"

namespace plenopress::nn {

namespace {

std::string shape_string(int c, int h, int w) {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

/// Output columns [lo, hi) whose input column ox * s + kx - pad lies in [0, width).
std::pair<int, int> valid_columns(int width, int out_width, int kx, int s, int pad) {
    const int lo = std::max(0, -floor_div(kx - pad, s));
    const int hi = std::min(out_width, floor_div(width - 1 + pad - kx, s) + 1);
    return {lo, hi};
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += x.data[i];
}

template <typename T>
Tensor<T> sum(Tensor<T> a, const Tensor<T>& b) {
    add_into(a, b);
    return a;
}

}  // namespace

// ---- convolution -----------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel_size, int stride_, bool causal_)
    : in(in_channels), out(out_channels), kernel(kernel_size), stride(stride_), causal(causal_),
      weight(static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size, T(0)),
      bias(out_channels, T(0)) {
    if (in <= 0 || out <= 0 || kernel <= 0 || kernel % 2 == 0 || stride <= 0)
        throw ContractError("conv2d: bad layer geometry");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2d<T>& layer) {
    if (x.channels != layer.in)
        throw ContractError("conv2d: input has " + std::to_string(x.channels) + " channels, layer expects " +
                            std::to_string(layer.in));
    const int k = layer.kernel, s = layer.stride, pad = layer.padding();
    const int oh = layer.output_size(x.height), ow = layer.output_size(x.width);
    if (oh <= 0 || ow <= 0) throw ContractError("conv2d: input " + shape_string(x.channels, x.height, x.width) + " too small");
    Tensor<T> y(layer.out, oh, ow);
    for (int o = 0; o < layer.out; ++o) {
        T* dst = y.channel(o);
        std::fill(dst, dst + y.plane(), layer.bias[o]);
        for (int i = 0; i < layer.in; ++i) {
            const T* src = x.channel(i);
            const T* w = layer.weight.data() + (static_cast<std::size_t>(o) * layer.in + i) * k * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    if (!layer.tap_active(ky, kx)) continue;
                    const T wv = w[ky * k + kx];
                    const auto [x_lo, x_hi] = valid_columns(x.width, ow, kx, s, pad);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= x.height) continue;
                        const T* row = src + static_cast<std::size_t>(iy) * x.width;
                        T* out_row = dst + static_cast<std::size_t>(oy) * ow;
                        for (int ox = x_lo; ox < x_hi; ++ox) out_row[ox] += wv * row[ox * s + kx - pad];
                    }
                }
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Conv2d<T>& layer, const Tensor<T>& grad_out, Conv2d<T>& grad) {
    const int k = layer.kernel, s = layer.stride, pad = layer.padding();
    const int oh = grad_out.height, ow = grad_out.width;
    Tensor<T> gx(x.channels, x.height, x.width);
    for (int o = 0; o < layer.out; ++o) {
        const T* g = grad_out.channel(o);
        T bsum = 0;
        for (std::size_t p = 0; p < grad_out.plane(); ++p) bsum += g[p];
        grad.bias[o] += bsum;
        for (int i = 0; i < layer.in; ++i) {
            const T* src = x.channel(i);
            T* gsrc = gx.channel(i);
            const std::size_t base = (static_cast<std::size_t>(o) * layer.in + i) * k * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    if (!layer.tap_active(ky, kx)) continue;
                    const T wv = layer.weight[base + ky * k + kx];
                    const auto [x_lo, x_hi] = valid_columns(x.width, ow, kx, s, pad);
                    T gw = 0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s + ky - pad;
                        if (iy < 0 || iy >= x.height) continue;
                        const std::size_t row = static_cast<std::size_t>(iy) * x.width;
                        const T* grow = g + static_cast<std::size_t>(oy) * ow;
                        for (int ox = x_lo; ox < x_hi; ++ox) {
                            const std::size_t ix = row + ox * s + kx - pad;
                            gw += grow[ox] * src[ix];
                            gsrc[ix] += grow[ox] * wv;
                        }
                    }
                    grad.weight[base + ky * k + kx] += gw;
                }
        }
    }
    return gx;
}

// ---- depth-to-space --------------------------------------------------------

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x) {
    if (x.channels % 4 != 0) throw ContractError("depth_to_space: channel count must be divisible by 4");
    Tensor<T> y(x.channels / 4, x.height * 2, x.width * 2);
    for (int c = 0; c < y.channels; ++c)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const T* src = x.channel(4 * c + 2 * dy + dx);
                for (int yy = 0; yy < x.height; ++yy)
                    for (int xx = 0; xx < x.width; ++xx)
                        y.at(c, 2 * yy + dy, 2 * xx + dx) = src[static_cast<std::size_t>(yy) * x.width + xx];
            }
    return y;
}

template <typename T>
Tensor<T> depth_to_space_backward(const Tensor<T>& grad_out) {
    Tensor<T> gx(grad_out.channels * 4, grad_out.height / 2, grad_out.width / 2);
    for (int c = 0; c < grad_out.channels; ++c)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                T* dst = gx.channel(4 * c + 2 * dy + dx);
                for (int yy = 0; yy < gx.height; ++yy)
                    for (int xx = 0; xx < gx.width; ++xx)
                        dst[static_cast<std::size_t>(yy) * gx.width + xx] = grad_out.at(c, 2 * yy + dy, 2 * xx + dx);
            }
    return gx;
}

// ---- GDN -------------------------------------------------------------------

template <typename T>
Gdn<T>::Gdn(int channels_, bool inverse_)
    : channels(channels_), inverse(inverse_), beta(channels_, T(1)),
      gamma(static_cast<std::size_t>(channels_) * channels_, T(0)) {}

namespace {

template <typename T>
void check_gdn(const Tensor<T>& x, const Gdn<T>& layer) {
    if (x.channels != layer.channels) throw ContractError("gdn: channel mismatch");
    for (T b : layer.beta)
        if (!(b > T(0))) throw ContractError("gdn: beta must be positive");
}

/// norm(i, p) = beta_i + sum_j gamma_ij x_j(p)^2 for every channel and position.
template <typename T>
Tensor<T> gdn_norm(const Tensor<T>& x, const Gdn<T>& layer) {
    const int C = layer.channels;
    Tensor<T> n(C, x.height, x.width);
    for (int i = 0; i < C; ++i) {
        T* dst = n.channel(i);
        std::fill(dst, dst + n.plane(), layer.beta[i]);
        for (int j = 0; j < C; ++j) {
            const T g = layer.gamma[static_cast<std::size_t>(i) * C + j];
            if (g == T(0)) continue;
            const T* src = x.channel(j);
            for (std::size_t p = 0; p < n.plane(); ++p) dst[p] += g * src[p] * src[p];
        }
    }
    return n;
}

}  // namespace

template <typename T>
Tensor<T> gdn(const Tensor<T>& x, const Gdn<T>& layer) {
    check_gdn(x, layer);
    Tensor<T> y = gdn_norm(x, layer);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const T root = std::sqrt(y.data[i]);
        y.data[i] = layer.inverse ? x.data[i] * root : x.data[i] / root;
    }
    return y;
}

template <typename T>
Tensor<T> gdn_backward(const Tensor<T>& x, const Gdn<T>& layer, const Tensor<T>& grad_out, Gdn<T>& grad) {
    check_gdn(x, layer);
    const int C = layer.channels;
    const std::size_t P = x.plane();
    const Tensor<T> n = gdn_norm(x, layer);
    // t_i = g_i x_i dN_i where dN_i = d(n^{-1/2})/dn or d(n^{1/2})/dn.
    Tensor<T> gx(C, x.height, x.width), t(C, x.height, x.width);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T root = std::sqrt(n.data[i]);
        if (layer.inverse) {
            gx.data[i] = grad_out.data[i] * root;
            t.data[i] = grad_out.data[i] * x.data[i] * (T(0.5) / root);
        } else {
            gx.data[i] = grad_out.data[i] / root;
            t.data[i] = grad_out.data[i] * x.data[i] * (T(-0.5) / (n.data[i] * root));
        }
    }
    for (int i = 0; i < C; ++i) {
        const T* ti = t.channel(i);
        T bsum = 0;
        for (std::size_t p = 0; p < P; ++p) bsum += ti[p];
        grad.beta[i] += bsum;
        for (int j = 0; j < C; ++j) {
            const T* xj = x.channel(j);
            T* gxj = gx.channel(j);
            const T g = layer.gamma[static_cast<std::size_t>(i) * C + j];
            T gg = 0;
            for (std::size_t p = 0; p < P; ++p) {
                gg += ti[p] * xj[p] * xj[p];
                gxj[p] += T(2) * g * ti[p] * xj[p];
            }
            grad.gamma[static_cast<std::size_t>(i) * C + j] += gg;
        }
    }
    return gx;
}

// ---- activations -----------------------------------------------------------

template <typename T>
Tensor<T> relu(Tensor<T> x, T negative_slope) {
    for (auto& v : x.data)
        if (v < T(0)) v *= negative_slope;
    return x;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, Tensor<T> grad_out, T negative_slope) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x.data[i] < T(0)) grad_out.data[i] *= negative_slope;
    return grad_out;
}

// ---- residual bottleneck blocks --------------------------------------------

template <typename T>
Rbnd<T>::Rbnd(int in, int out)
    : reduce(in, std::max(1, out / 2), 1, 1), conv(std::max(1, out / 2), std::max(1, out / 2), 3, 2),
      expand(std::max(1, out / 2), out, 1, 1), skip(in, out, 1, 2), norm(out, false) {}

template <typename T>
Rbnu<T>::Rbnu(int in, int out)
    : reduce(in, std::max(1, out / 2), 1, 1), conv(std::max(1, out / 2), 4 * std::max(1, out / 2), 3, 1),
      expand(std::max(1, out / 2), out, 1, 1), skip(in, 4 * out, 1, 1), norm(out, true) {}

namespace {

template <typename T>
struct BlockTrace {
    Tensor<T> a, a_act, b, b_act, sum;
};

template <typename T>
BlockTrace<T> rbnd_trace(const Tensor<T>& x, const Rbnd<T>& blk) {
    BlockTrace<T> t;
    t.a = conv2d(x, blk.reduce);
    t.a_act = relu(t.a);
    t.b = conv2d(t.a_act, blk.conv);
    t.b_act = relu(t.b);
    t.sum = sum(conv2d(t.b_act, blk.expand), conv2d(x, blk.skip));
    return t;
}

template <typename T>
BlockTrace<T> rbnu_trace(const Tensor<T>& x, const Rbnu<T>& blk) {
    BlockTrace<T> t;
    t.a = conv2d(x, blk.reduce);
    t.a_act = relu(t.a);
    t.b = depth_to_space(conv2d(t.a_act, blk.conv));
    t.b_act = relu(t.b);
    t.sum = sum(conv2d(t.b_act, blk.expand), depth_to_space(conv2d(x, blk.skip)));
    return t;
}

}  // namespace

template <typename T>
Tensor<T> rbnd(const Tensor<T>& x, const Rbnd<T>& block) {
    return gdn(rbnd_trace(x, block).sum, block.norm);
}

template <typename T>
Tensor<T> rbnd_backward(const Tensor<T>& x, const Rbnd<T>& blk, const Tensor<T>& grad_out, Rbnd<T>& grad) {
    const auto t = rbnd_trace(x, blk);
    const Tensor<T> g_sum = gdn_backward(t.sum, blk.norm, grad_out, grad.norm);
    Tensor<T> gx = conv2d_backward(x, blk.skip, g_sum, grad.skip);
    Tensor<T> g = relu_backward(t.b, conv2d_backward(t.b_act, blk.expand, g_sum, grad.expand));
    g = relu_backward(t.a, conv2d_backward(t.a_act, blk.conv, g, grad.conv));
    add_into(gx, conv2d_backward(x, blk.reduce, g, grad.reduce));
    return gx;
}

template <typename T>
Tensor<T> rbnu(const Tensor<T>& x, const Rbnu<T>& block) {
    return gdn(rbnu_trace(x, block).sum, block.norm);
}

template <typename T>
Tensor<T> rbnu_backward(const Tensor<T>& x, const Rbnu<T>& blk, const Tensor<T>& grad_out, Rbnu<T>& grad) {
    const auto t = rbnu_trace(x, blk);
    const Tensor<T> g_sum = gdn_backward(t.sum, blk.norm, grad_out, grad.norm);
    Tensor<T> gx = conv2d_backward(x, blk.skip, depth_to_space_backward(g_sum), grad.skip);
    Tensor<T> g = relu_backward(t.b, conv2d_backward(t.b_act, blk.expand, g_sum, grad.expand));
    g = relu_backward(t.a, conv2d_backward(t.a_act, blk.conv, depth_to_space_backward(g), grad.conv));
    add_into(gx, conv2d_backward(x, blk.reduce, g, grad.reduce));
    return gx;
}

// ---- resampler -------------------------------------------------------------

template <typename T>
Resampler<T>::Resampler(ResamplerKind kind_, int channels) : kind(kind_) {
    switch (kind) {
        case ResamplerKind::Rbnd: down = Rbnd<T>(channels, channels); break;
        case ResamplerKind::Rbnu: up = Rbnu<T>(channels, channels); break;
        case ResamplerKind::Conv: conv = Conv2d<T>(channels, channels, 3, 2); break;
        case ResamplerKind::Subpixel: conv = Conv2d<T>(channels, 4 * channels, 3, 1); break;
    }
}

template <typename T>
Tensor<T> resample(const Tensor<T>& x, const Resampler<T>& r) {
    switch (r.kind) {
        case ResamplerKind::Rbnd: return rbnd(x, r.down);
        case ResamplerKind::Rbnu: return rbnu(x, r.up);
        case ResamplerKind::Conv: return conv2d(x, r.conv);
        case ResamplerKind::Subpixel: return depth_to_space(conv2d(x, r.conv));
    }
    return {};
}

template <typename T>
Tensor<T> resample_backward(const Tensor<T>& x, const Resampler<T>& r, const Tensor<T>& grad_out, Resampler<T>& grad) {
    switch (r.kind) {
        case ResamplerKind::Rbnd: return rbnd_backward(x, r.down, grad_out, grad.down);
        case ResamplerKind::Rbnu: return rbnu_backward(x, r.up, grad_out, grad.up);
        case ResamplerKind::Conv: return conv2d_backward(x, r.conv, grad_out, grad.conv);
        case ResamplerKind::Subpixel: return conv2d_backward(x, r.conv, depth_to_space_backward(grad_out), grad.conv);
    }
    return {};
}

// ---- global attention ------------------------------------------------------

template <typename T>
GlobalAttention<T>::GlobalAttention(ResamplerKind kind, int channels_, int heads_, AttentionScale scale_)
    : channels(channels_), heads(heads_), scale(scale_), resampler(kind, channels_) {
    if (heads <= 0 || channels % heads != 0)
        throw ContractError("global_attention: " + std::to_string(channels) + " channels not divisible by " +
                            std::to_string(heads) + " heads");
    const std::size_t mat = static_cast<std::size_t>(channels) * channels;
    for (auto& st : stage) {
        st.wq.assign(mat, T(0));
        st.wk.assign(mat, T(0));
        st.wv.assign(mat, T(0));
        st.wo.assign(mat, T(0));
        st.bq.assign(channels, T(0));
        st.bv.assign(channels, T(0));
        st.bo.assign(channels, T(0));
    }
}

template <typename T>
double GlobalAttention<T>::score_divisor() const {
    return std::sqrt(static_cast<double>(scale == AttentionScale::Full ? channels : channels / heads));
}

namespace {

/// Row-major n x C matrix view of a feature map: row p is pixel p.
template <typename T>
std::vector<T> to_rows(const Tensor<T>& t) {
    const std::size_t P = t.plane();
    std::vector<T> rows(P * t.channels);
    for (int c = 0; c < t.channels; ++c)
        for (std::size_t p = 0; p < P; ++p) rows[p * t.channels + c] = t.data[c * P + p];
    return rows;
}

template <typename T>
Tensor<T> from_rows(const std::vector<T>& rows, int c, int h, int w) {
    Tensor<T> t(c, h, w);
    const std::size_t P = t.plane();
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < P; ++p) t.data[ch * P + p] = rows[p * c + ch];
    return t;
}

/// out = in W^T (+ b) for n rows of width C.
template <typename T>
std::vector<T> linear(const std::vector<T>& in, int C, const std::vector<T>& w, const std::vector<T>* b) {
    const std::size_t n = in.size() / C;
    std::vector<T> out(in.size());
    for (std::size_t r = 0; r < n; ++r) {
        const T* x = in.data() + r * C;
        for (int i = 0; i < C; ++i) {
            const T* wi = w.data() + static_cast<std::size_t>(i) * C;
            T s = b ? (*b)[i] : T(0);
            for (int j = 0; j < C; ++j) s += wi[j] * x[j];
            out[r * C + i] = s;
        }
    }
    return out;
}

/// Given grad of out = in W^T + b: accumulates dW, db and returns d(in).
template <typename T>
std::vector<T> linear_backward(const std::vector<T>& in, int C, const std::vector<T>& w, const std::vector<T>& g,
                               std::vector<T>& gw, std::vector<T>* gb) {
    const std::size_t n = in.size() / C;
    std::vector<T> gin(in.size(), T(0));
    for (std::size_t r = 0; r < n; ++r) {
        const T* x = in.data() + r * C;
        const T* gr = g.data() + r * C;
        T* gx = gin.data() + r * C;
        for (int i = 0; i < C; ++i) {
            const T gi = gr[i];
            if (gb) (*gb)[i] += gi;
            T* gwi = gw.data() + static_cast<std::size_t>(i) * C;
            const T* wi = w.data() + static_cast<std::size_t>(i) * C;
            for (int j = 0; j < C; ++j) {
                gwi[j] += gi * x[j];
                gx[j] += gi * wi[j];
            }
        }
    }
    return gin;
}

/// Keys of one head transposed (dh x n) and values of one head (n x dh),
/// both contiguous so the per-row loops run over unit strides.
template <typename T>
struct HeadBlocks {
    int dh = 0;
    std::size_t n = 0;
    std::vector<T> kt, v;
};

template <typename T>
std::vector<HeadBlocks<T>> split_heads(const std::vector<T>& K, const std::vector<T>& V, int C, int heads) {
    const int dh = C / heads;
    const std::size_t n = K.size() / C;
    std::vector<HeadBlocks<T>> out(heads);
    for (int h = 0; h < heads; ++h) {
        auto& hb = out[h];
        hb.dh = dh;
        hb.n = n;
        hb.kt.resize(static_cast<std::size_t>(dh) * n);
        hb.v.resize(static_cast<std::size_t>(dh) * n);
        for (std::size_t j = 0; j < n; ++j)
            for (int c = 0; c < dh; ++c) {
                hb.kt[c * n + j] = K[j * C + h * dh + c];
                hb.v[j * dh + c] = V[j * C + h * dh + c];
            }
    }
    return out;
}

/// Softmax weights of one query slice against all keys of one head.
template <typename T>
void attention_row(const T* q, const HeadBlocks<T>& hb, T inv_div, std::vector<T>& a) {
    const std::size_t n = hb.n;
    thread_local std::vector<double> e;
    e.resize(n);
    std::fill(a.begin(), a.begin() + n, T(0));
    for (int c = 0; c < hb.dh; ++c) {
        const T qc = q[c];
        const T* kt = hb.kt.data() + c * n;
        for (std::size_t j = 0; j < n; ++j) a[j] += qc * kt[j];
    }
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        a[j] *= inv_div;
        m = std::max(m, a[j]);
    }
    for (std::size_t j = 0; j < n; ++j) e[j] = static_cast<double>(a[j] - m);
    detmath::exp_nonpositive(e.data(), n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
        a[j] = static_cast<T>(e[j]);
        total += a[j];
    }
    const T inv_total = T(1) / total;
    for (std::size_t j = 0; j < n; ++j) a[j] *= inv_total;
}

/// o = sum_j a_j v_j for one head.
template <typename T>
void attend(const std::vector<T>& a, const HeadBlocks<T>& hb, T* o) {
    const int dh = hb.dh;
    for (std::size_t j = 0; j < hb.n; ++j) {
        const T aj = a[j];
        const T* v = hb.v.data() + j * dh;
        for (int c = 0; c < dh; ++c) o[c] += aj * v[c];
    }
}

template <typename T>
struct StageValues {
    std::vector<T> q, k, v;
};

template <typename T>
StageValues<T> project(const AttentionStage<T>& st, const std::vector<T>& D, const std::vector<T>& R, int C) {
    return {linear(D, C, st.wq, &st.bq), linear(R, C, st.wk, static_cast<const std::vector<T>*>(nullptr)),
            linear(R, C, st.wv, &st.bv)};
}

/// Concatenated per-head attention outputs, before the output projection.
template <typename T>
std::vector<T> attend_all(const GlobalAttention<T>& ga, const StageValues<T>& pv, const std::vector<HeadBlocks<T>>& hbs,
                          AttentionStats* stats) {
    const int C = ga.channels, dh = C / ga.heads;
    const std::size_t nd = pv.q.size() / C, nr = pv.k.size() / C;
    const T inv_div = static_cast<T>(1.0 / ga.score_divisor());
    std::vector<T> O(pv.q.size(), T(0)), a(nr);
    for (std::size_t i = 0; i < nd; ++i)
        for (int h = 0; h < ga.heads; ++h) {
            attention_row(pv.q.data() + i * C + h * dh, hbs[h], inv_div, a);
            attend(a, hbs[h], O.data() + i * C + h * dh);
            if (stats) {
                double row_sum = 0.0;
                for (std::size_t j = 0; j < nr; ++j) row_sum += static_cast<double>(a[j]);
                stats->rows += 1;
                stats->max_row_sum_error = std::max(stats->max_row_sum_error, std::fabs(row_sum - 1.0));
            }
        }
    return O;
}

/// One stage: D + Wo * concat_h(softmax(q_h k_h^T / div) v_h) + bo.
template <typename T>
std::vector<T> stage_forward(const GlobalAttention<T>& ga, const AttentionStage<T>& st, const std::vector<T>& D,
                             const std::vector<T>& R, AttentionStats* stats) {
    const int C = ga.channels;
    const auto pv = project(st, D, R, C);
    const auto hbs = split_heads(pv.k, pv.v, C, ga.heads);
    std::vector<T> out = linear(attend_all(ga, pv, hbs, stats), C, st.wo, &st.bo);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += D[i];
    return out;
}

/// Backward of stage_forward; returns dD and accumulates dR.
template <typename T>
std::vector<T> stage_backward(const GlobalAttention<T>& ga, const AttentionStage<T>& st, const std::vector<T>& D,
                              const std::vector<T>& R, const std::vector<T>& g_out, AttentionStage<T>& grad,
                              std::vector<T>& gR) {
    const int C = ga.channels, dh = C / ga.heads;
    const auto pv = project(st, D, R, C);
    const std::size_t nd = D.size() / C, nr = R.size() / C;
    const T inv_div = static_cast<T>(1.0 / ga.score_divisor());

    const auto hbs = split_heads(pv.k, pv.v, C, ga.heads);
    const std::vector<T> gO = linear_backward(attend_all(ga, pv, hbs, nullptr), C, st.wo, g_out, grad.wo, &grad.bo);

    std::vector<T> gQ(D.size(), T(0)), gK(R.size(), T(0)), gV(R.size(), T(0)), a(nr), ga_row(nr);
    for (std::size_t i = 0; i < nd; ++i)
        for (int h = 0; h < ga.heads; ++h) {
            const int c0 = h * dh;
            const T* q = pv.q.data() + i * C + c0;
            const T* go = gO.data() + i * C + c0;
            attention_row(q, hbs[h], inv_div, a);
            T dot = 0;
            for (std::size_t j = 0; j < nr; ++j) {
                const T* v = pv.v.data() + j * C + c0;
                T s = 0;
                for (int c = 0; c < dh; ++c) s += go[c] * v[c];
                ga_row[j] = s;
                dot += a[j] * s;
            }
            T* gq = gQ.data() + i * C + c0;
            for (std::size_t j = 0; j < nr; ++j) {
                const T gs = a[j] * (ga_row[j] - dot) * inv_div;
                const T* k = pv.k.data() + j * C + c0;
                T* gk = gK.data() + j * C + c0;
                T* gv = gV.data() + j * C + c0;
                for (int c = 0; c < dh; ++c) {
                    gq[c] += gs * k[c];
                    gk[c] += gs * q[c];
                    gv[c] += a[j] * go[c];
                }
            }
        }

    std::vector<T> gD = linear_backward(D, C, st.wq, gQ, grad.wq, &grad.bq);
    for (std::size_t i = 0; i < gD.size(); ++i) gD[i] += g_out[i];
    const auto gRk = linear_backward(R, C, st.wk, gK, grad.wk, static_cast<std::vector<T>*>(nullptr));
    const auto gRv = linear_backward(R, C, st.wv, gV, grad.wv, &grad.bv);
    for (std::size_t i = 0; i < gR.size(); ++i) gR[i] += gRk[i] + gRv[i];
    return gD;
}

template <typename T>
void check_attention(const Tensor<T>& f, const Tensor<T>& fd, const GlobalAttention<T>& ga) {
    if (f.channels != ga.channels) throw ContractError("global_attention: channel mismatch");
    if (ga.heads <= 0 || ga.channels % ga.heads != 0) throw ContractError("global_attention: channels not divisible by heads");
    const std::size_t largest = std::max(f.plane(), fd.plane());
    if (largest > kAttentionBudget)
        throw ContractError("global_attention: " + std::to_string(largest) + " positions exceed the attention budget of " +
                            std::to_string(kAttentionBudget));
}

}  // namespace

template <typename T>
Tensor<T> global_attention(const Tensor<T>& f, const GlobalAttention<T>& ga, AttentionStats* stats) {
    const Tensor<T> fd = resample(f, ga.resampler);
    check_attention(f, fd, ga);
    const int C = ga.channels;
    const auto R = to_rows(f), Dr = to_rows(fd);
    const auto d1 = stage_forward(ga, ga.stage[0], Dr, R, stats);
    auto d2 = stage_forward(ga, ga.stage[1], d1, R, stats);
    for (std::size_t i = 0; i < d2.size(); ++i) d2[i] += Dr[i];
    return from_rows(d2, C, fd.height, fd.width);
}

template <typename T>
Tensor<T> global_attention_backward(const Tensor<T>& f, const GlobalAttention<T>& ga, const Tensor<T>& grad_out,
                                    GlobalAttention<T>& grad) {
    const Tensor<T> fd = resample(f, ga.resampler);
    check_attention(f, fd, ga);
    const int C = ga.channels;
    const auto R = to_rows(f), Dr = to_rows(fd);
    const auto d1 = stage_forward(ga, ga.stage[0], Dr, R, nullptr);
    const auto g = to_rows(grad_out);
    std::vector<T> gR(R.size(), T(0));
    const auto g_d1 = stage_backward(ga, ga.stage[1], d1, R, g, grad.stage[1], gR);
    auto g_dr = stage_backward(ga, ga.stage[0], Dr, R, g_d1, grad.stage[0], gR);
    for (std::size_t i = 0; i < g_dr.size(); ++i) g_dr[i] += g[i];
    Tensor<T> gf = resample_backward(f, ga.resampler, from_rows(g_dr, C, fd.height, fd.width), grad.resampler);
    add_into(gf, from_rows(gR, C, f.height, f.width));
    return gf;
}

#define PLENOPRESS_INSTANTIATE(T)                                                                                   \
    template struct Conv2d<T>;                                                                                      \
    template struct Gdn<T>;                                                                                         \
    template struct Rbnd<T>;                                                                                        \
    template struct Rbnu<T>;                                                                                        \
    template struct Resampler<T>;                                                                                   \
    template struct GlobalAttention<T>;                                                                             \
    template Tensor<T> conv2d(const Tensor<T>&, const Conv2d<T>&);                                                  \
    template Tensor<T> conv2d_backward(const Tensor<T>&, const Conv2d<T>&, const Tensor<T>&, Conv2d<T>&);           \
    template Tensor<T> depth_to_space(const Tensor<T>&);                                                            \
    template Tensor<T> depth_to_space_backward(const Tensor<T>&);                                                   \
    template Tensor<T> gdn(const Tensor<T>&, const Gdn<T>&);                                                        \
    template Tensor<T> gdn_backward(const Tensor<T>&, const Gdn<T>&, const Tensor<T>&, Gdn<T>&);                    \
    template Tensor<T> relu(Tensor<T>, T);                                                                          \
    template Tensor<T> relu_backward(const Tensor<T>&, Tensor<T>, T);                                               \
    template Tensor<T> rbnd(const Tensor<T>&, const Rbnd<T>&);                                                      \
    template Tensor<T> rbnd_backward(const Tensor<T>&, const Rbnd<T>&, const Tensor<T>&, Rbnd<T>&);                 \
    template Tensor<T> rbnu(const Tensor<T>&, const Rbnu<T>&);                                                      \
    template Tensor<T> rbnu_backward(const Tensor<T>&, const Rbnu<T>&, const Tensor<T>&, Rbnu<T>&);                 \
    template Tensor<T> resample(const Tensor<T>&, const Resampler<T>&);                                             \
    template Tensor<T> resample_backward(const Tensor<T>&, const Resampler<T>&, const Tensor<T>&, Resampler<T>&);   \
    template Tensor<T> global_attention(const Tensor<T>&, const GlobalAttention<T>&, AttentionStats*);              \
    template Tensor<T> global_attention_backward(const Tensor<T>&, const GlobalAttention<T>&, const Tensor<T>&,     \
                                                 GlobalAttention<T>&);

PLENOPRESS_INSTANTIATE(float)
PLENOPRESS_INSTANTIATE(double)

}  // namespace plenopress::nn
